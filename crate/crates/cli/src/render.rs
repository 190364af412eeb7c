use anyhow::Result;
use cspscale::CostReport;

/// Column order of per-stage CSV output.
pub const STAGE_COLUMNS: [&str; 9] = [
    "stage",
    "name",
    "role",
    "kind",
    "flops",
    "params",
    "mac",
    "cio",
    "receptive_field",
];

/// `3528698368` -> `3.53G`.
pub fn human(n: u128) -> String {
    const UNITS: [(u128, &str); 4] = [
        (1_000_000_000_000, "T"),
        (1_000_000_000, "G"),
        (1_000_000, "M"),
        (1_000, "K"),
    ];
    for (scale, unit) in UNITS {
        if n >= scale {
            return format!("{:.2}{unit}", n as f64 / scale as f64);
        }
    }
    n.to_string()
}

pub fn percent(x: f64) -> String {
    format!("{:.2}%", x * 100.0)
}

/// Left-aligned text, right-aligned numbers, two spaces between columns.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let numeric = |s: &str| !s.is_empty() && s.chars().all(|c| c.is_ascii_digit() || "-.%".contains(c));
    // A column is right-aligned when every non-empty cell in it is numeric,
    // so the header sits over the numbers.
    let right: Vec<bool> = (0..headers.len())
        .map(|i| {
            let mut cells = rows.iter().filter_map(|r| r.get(i)).filter(|c| !c.is_empty()).peekable();
            cells.peek().is_some() && cells.all(|c| numeric(c))
        })
        .collect();
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(widths.iter().zip(&right))
            .map(|(c, (&w, &r))| if r { format!("{c:>w$}") } else { format!("{c:<w$}") })
            .collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(headers.to_vec());
    for row in rows {
        out += &line(row.iter().map(String::as_str).collect());
    }
    out
}

pub fn csv(headers: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(headers)?;
    for row in rows {
        w.write_record(row)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn stage_rows(report: &CostReport) -> Vec<Vec<String>> {
    report
        .per_stage
        .iter()
        .map(|s| {
            vec![
                s.index.to_string(),
                s.name.clone().unwrap_or_default(),
                s.role.to_string(),
                s.kind.to_string(),
                s.flops.to_string(),
                s.params.to_string(),
                s.mac.to_string(),
                s.cio.to_string(),
                s.receptive_field.to_string(),
            ]
        })
        .collect()
}

pub fn total_row(label: &str, r: &CostReport) -> Vec<String> {
    vec![
        label.to_string(),
        String::new(),
        String::new(),
        String::new(),
        r.flops.to_string(),
        r.params.to_string(),
        r.mac.to_string(),
        r.cio.to_string(),
        r.receptive_field.to_string(),
    ]
}

/// Metric name and value pairs of a report's totals.
pub fn totals(r: &CostReport) -> [(&'static str, u128); 5] {
    [
        ("flops", r.flops),
        ("params", r.params),
        ("mac", r.mac),
        ("cio", r.cio),
        ("receptive_field", r.receptive_field),
    ]
}

/// Two-column summary: raw count and humanized count.
pub fn summary(r: &CostReport) -> String {
    let rows: Vec<Vec<String>> = totals(r)
        .iter()
        .map(|&(m, v)| vec![m.to_string(), v.to_string(), human(v)])
        .collect();
    table(&["metric", "value", "human"], &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn humanized_counts() {
        assert_eq!(human(999), "999");
        assert_eq!(human(3_528_698_368), "3.53G");
        assert_eq!(human(62_944_352), "62.94M");
    }

    #[test]
    fn table_aligns_columns() {
        let t = table(&["a", "n"], &[vec!["xyz".into(), "5".into()], vec!["q".into(), "100".into()]]);
        assert_eq!(t, "a      n\nxyz    5\nq    100\n");
    }

    #[test]
    fn csv_quotes_commas() {
        let c = csv(&["name", "notes"], &[vec!["x".into(), "a, b".into()]]).unwrap();
        assert_eq!(c, "name,notes\nx,\"a, b\"\n");
    }
}
