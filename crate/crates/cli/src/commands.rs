use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use cspscale::presets::PRESET_NAMES;
use cspscale::scale::Status;
use cspscale::{
    analyze, check_tiny_principles, compound_scale_up, cspize, oracle_cost, preset, prune_heads,
    serialize_spec, Budget, CostReport, NetworkSpec, RewriteReport, ScalePlan, Scope,
};

use crate::error::usage;
use crate::render::{self, human, percent, stage_rows, summary, table, total_row, STAGE_COLUMNS};
use crate::source::{load, load_with_input};
use crate::{Cli, Command, Format, PresetsAction, ScopeArg};

pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Analyze { source, input } => {
            let spec = load_with_input(source, input.input)?;
            analyze_cmd(cli, &spec)
        }
        Command::Compare { a, b, input } => {
            let a = load_with_input(a, input.input)?;
            let b = load_with_input(b, input.input)?;
            compare_cmd(cli, &a, &b)
        }
        Command::Cspize {
            source,
            scope,
            output,
        } => {
            let spec = load(source)?;
            let scope = match scope {
                ScopeArg::Backbone => Scope::Backbone,
                ScopeArg::Neck => Scope::Neck,
                ScopeArg::All => Scope::All,
            };
            let (out, report) = cspize(&spec, scope)?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            write_spec(output.as_deref(), &out)?;
            rewrite_output(cli, &out, &report)
        }
        Command::Prune {
            source,
            remove,
            output,
        } => {
            let spec = load(source)?;
            let (out, report) = prune_heads(&spec, remove)?;
            write_spec(output.as_deref(), &out)?;
            rewrite_output(cli, &out, &report)
        }
        Command::Scale {
            source,
            input,
            budget_flops,
            budget_ratio,
            output,
        } => {
            let spec = load(source)?;
            let budget = match (budget_flops, budget_ratio) {
                (Some(f), _) => Budget::Flops(*f),
                (None, Some(r)) if *r > 0.0 && r.is_finite() => Budget::RatioToBase(*r),
                (None, Some(r)) => return Err(usage(format!("--budget-ratio must be positive, got {r}"))),
                (None, None) => return Err(usage("a budget is required")),
            };
            let plan = compound_scale_up(&spec, *input, budget)?;
            write_spec(output.as_deref(), &plan.resulting_spec)?;
            scale_output(cli, &spec, &plan)
        }
        Command::Presets { action } => match action {
            PresetsAction::List => presets_list(cli),
            PresetsAction::Show { name } => {
                let p = preset(name)?;
                Ok(match cli.format {
                    Format::Json => pretty(&json!({
                        "name": p.name,
                        "notes": p.notes,
                        "spec": serialize_spec(&p.spec),
                    }))?,
                    _ => format!("# {}\n{}", p.notes, serialize_spec(&p.spec)),
                })
            }
        },
        Command::CheckTiny { source } => {
            let spec = load(source)?;
            let report = check_tiny_principles(&spec, cli.tau)?;
            Ok(match cli.format {
                Format::Json => pretty(&report)?,
                Format::Csv => {
                    let rows: Vec<Vec<String>> = report
                        .principles
                        .iter()
                        .map(|p| {
                            vec![
                                p.id.to_string(),
                                p.title.clone(),
                                status_name(p.status).to_string(),
                                p.summary.clone(),
                            ]
                        })
                        .collect();
                    render::csv(&["principle", "title", "status", "summary"], &rows)?
                }
                Format::Table => {
                    let mut out = format!("{} (tau = {})\n", spec.name, report.tau);
                    for p in &report.principles {
                        out += &format!(
                            "[{}] {}. {}: {}\n",
                            status_name(p.status),
                            p.id,
                            p.title,
                            p.summary
                        );
                        for v in &p.violations {
                            match v.mac_penalty {
                                Some(m) => out += &format!("      {}: {} (MAC penalty {m})\n", v.stage, v.detail),
                                None => out += &format!("      {}: {}\n", v.stage, v.detail),
                            }
                        }
                    }
                    out
                }
            })
        }
    }
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::NotApplicable => "N/A",
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn write_spec(path: Option<&Path>, spec: &NetworkSpec) -> Result<()> {
    if let Some(path) = path {
        std::fs::write(path, serialize_spec(spec))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn costs(spec: &NetworkSpec, oracle: bool) -> Result<(CostReport, Option<CostReport>)> {
    let closed = analyze(spec)?;
    let brute = if oracle { Some(oracle_cost(spec)?) } else { None };
    Ok((closed, brute))
}

fn difference(a: &CostReport, b: &CostReport) -> Value {
    let d = |x: u128, y: u128| x as i128 - y as i128;
    json!({
        "flops": d(a.flops, b.flops),
        "params": d(a.params, b.params),
        "mac": d(a.mac, b.mac),
        "cio": d(a.cio, b.cio),
        "receptive_field": d(a.receptive_field, b.receptive_field),
    })
}

fn analyze_cmd(cli: &Cli, spec: &NetworkSpec) -> Result<String> {
    let (closed, brute) = costs(spec, cli.oracle)?;
    let input = spec.input;
    match cli.format {
        Format::Json => {
            let mut doc = json!({
                "network": spec.name,
                "input": input,
                "closed_form": closed,
            });
            if let Some(o) = &brute {
                doc["oracle"] = serde_json::to_value(o)?;
                doc["difference"] = difference(&closed, o);
            }
            pretty(&doc)
        }
        Format::Csv => {
            let mut rows = stage_rows(&closed);
            rows.push(total_row("total", &closed));
            if let Some(o) = &brute {
                rows.push(total_row("oracle_total", o));
            }
            render::csv(&STAGE_COLUMNS, &rows)
        }
        Format::Table => {
            let mut out = format!(
                "{}: input {}x{}x{}\n\n",
                spec.name, input.width, input.height, input.channels
            );
            let mut rows = stage_rows(&closed);
            rows.push(total_row("total", &closed));
            out += &table(&STAGE_COLUMNS, &rows);
            out += "\n";
            match &brute {
                None => out += &summary(&closed),
                Some(o) => {
                    let rows: Vec<Vec<String>> = render::totals(&closed)
                        .iter()
                        .zip(render::totals(o))
                        .map(|(&(m, c), (_, b))| {
                            vec![
                                m.to_string(),
                                c.to_string(),
                                b.to_string(),
                                (c as i128 - b as i128).to_string(),
                                human(c),
                            ]
                        })
                        .collect();
                    out += &table(&["metric", "closed_form", "oracle", "difference", "human"], &rows);
                }
            }
            Ok(out)
        }
    }
}

fn compare_cmd(cli: &Cli, a: &NetworkSpec, b: &NetworkSpec) -> Result<String> {
    let (ca, oa) = costs(a, cli.oracle)?;
    let (cb, ob) = costs(b, cli.oracle)?;
    // With --oracle the brute-force counts are compared.
    let ra = oa.unwrap_or(ca);
    let rb = ob.unwrap_or(cb);
    let rows: Vec<(&str, u128, u128, f64)> = render::totals(&ra)
        .iter()
        .zip(render::totals(&rb))
        .map(|(&(m, x), (_, y))| (m, x, y, cspscale::cost::reduction(x, y)))
        .collect();
    match cli.format {
        Format::Json => {
            let metrics: serde_json::Map<String, Value> = rows
                .iter()
                .map(|&(m, x, y, r)| (m.to_string(), json!({"a": x, "b": y, "reduction": r})))
                .collect();
            pretty(&json!({
                "a": a.name,
                "b": b.name,
                "metrics": metrics,
            }))
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = rows
                .iter()
                .map(|&(m, x, y, r)| vec![m.to_string(), x.to_string(), y.to_string(), format!("{r:.6}")])
                .collect();
            render::csv(&["metric", "a", "b", "reduction"], &rows)
        }
        Format::Table => {
            let rows: Vec<Vec<String>> = rows
                .iter()
                .map(|&(m, x, y, r)| {
                    vec![m.to_string(), x.to_string(), y.to_string(), human(x), human(y), percent(r)]
                })
                .collect();
            Ok(format!("a = {}\nb = {}\n\n", a.name, b.name)
                + &table(&["metric", "a", "b", "a_human", "b_human", "reduction"], &rows))
        }
    }
}

/// Totals before and after a rewrite, plus the FLOPs of the neck stages.
fn rewrite_rows(report: &RewriteReport) -> Vec<(&'static str, u128, u128)> {
    let mut rows: Vec<_> = render::totals(&report.before)
        .iter()
        .zip(render::totals(&report.after))
        .map(|(&(m, x), (_, y))| (m, x, y))
        .collect();
    rows.push(("neck_flops", report.before.neck_flops(), report.after.neck_flops()));
    rows
}

fn rewrite_output(cli: &Cli, out: &NetworkSpec, report: &RewriteReport) -> Result<String> {
    match cli.format {
        Format::Json => {
            let mut doc = serde_json::to_value(report)?;
            doc["network"] = json!(out.name);
            pretty(&doc)
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = rewrite_rows(report)
                .into_iter()
                .map(|(m, x, y)| {
                    vec![m.to_string(), x.to_string(), y.to_string(), format!("{:.6}", cspscale::cost::reduction(x, y))]
                })
                .collect();
            render::csv(&["metric", "before", "after", "reduction"], &rows)
        }
        Format::Table => {
            let mut text = String::new();
            for line in &report.transform_log {
                text += &format!("  {line}\n");
            }
            for w in &report.warnings {
                text += &format!("  warning: {w}\n");
            }
            let rows: Vec<Vec<String>> = rewrite_rows(report)
                .into_iter()
                .map(|(m, x, y)| {
                    vec![
                        m.to_string(),
                        x.to_string(),
                        y.to_string(),
                        human(x),
                        human(y),
                        percent(cspscale::cost::reduction(x, y)),
                    ]
                })
                .collect();
            Ok(format!("{}\n{text}\n", out.name)
                + &table(&["metric", "before", "after", "before_human", "after_human", "reduction"], &rows))
        }
    }
}

fn scale_output(cli: &Cli, base: &NetworkSpec, plan: &ScalePlan) -> Result<String> {
    let base_cost = analyze(base)?;
    let w = plan.width_multiplier;
    match cli.format {
        Format::Json => pretty(&json!({
            "factors": plan.factors,
            "stage_depths": plan.stage_depths,
            "width_multiplier": *w.numer() as f64 / *w.denom() as f64,
            "width_multiplier_exact": w.to_string(),
            "budget": plan.budget,
            "base": base_cost,
            "cost": plan.cost,
            "spec": serialize_spec(&plan.resulting_spec),
        })),
        Format::Csv => {
            let rows: Vec<Vec<String>> = render::totals(&base_cost)
                .iter()
                .zip(render::totals(&plan.cost))
                .map(|(&(m, x), (_, y))| vec![m.to_string(), x.to_string(), y.to_string()])
                .collect();
            render::csv(&["metric", "base", "scaled"], &rows)
        }
        Format::Table => {
            let f = &plan.factors;
            let mut out = format!(
                "alpha (size) {:.4}  beta (depth) {:.4}  gamma (width) {w}  added stages {}\nstage depths {:?}\nbudget {} ({})\n\n",
                f.alpha_size,
                f.beta_depth,
                f.delta_stages,
                plan.stage_depths,
                plan.budget,
                human(plan.budget)
            );
            let rows: Vec<Vec<String>> = render::totals(&base_cost)
                .iter()
                .zip(render::totals(&plan.cost))
                .map(|(&(m, x), (_, y))| vec![m.to_string(), x.to_string(), y.to_string(), human(x), human(y)])
                .collect();
            out += &table(&["metric", "base", "scaled", "base_human", "scaled_human"], &rows);
            Ok(out)
        }
    }
}

fn presets_list(cli: &Cli) -> Result<String> {
    let presets: Vec<_> = PRESET_NAMES.iter().map(|n| preset(n)).collect::<Result<_, _>>()?;
    match cli.format {
        Format::Json => {
            let list: Vec<Value> = presets
                .iter()
                .map(|p| json!({"name": p.name, "stages": p.spec.stages.len(), "notes": p.notes}))
                .collect();
            pretty(&list)
        }
        Format::Csv => {
            let rows: Vec<Vec<String>> = presets
                .iter()
                .map(|p| vec![p.name.clone(), p.spec.stages.len().to_string(), p.notes.clone()])
                .collect();
            render::csv(&["name", "stages", "notes"], &rows)
        }
        Format::Table => {
            let mut out = String::new();
            for p in &presets {
                out += &format!("{:<16} {}\n", p.name, p.notes);
            }
            out += "\nComposites: <darknet53|cspdarknet53|cd53s>+<fpnspp|cfpnspp|panspp|cpanspp>\n";
            out += "Pruning suffix: <name>\\P7\\P6 removes the listed top levels\n";
            Ok(out)
        }
    }
}
