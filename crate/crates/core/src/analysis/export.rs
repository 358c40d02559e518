use super::{AttackReport, TTestReport};
use std::io::{self, Write};

/// `# key: value` header lines followed by `sample_index,t_score` rows.
pub fn write_tvla_csv<W: Write>(
    mut w: W,
    report: &TTestReport,
    meta: &[(&str, String)],
) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "# n_fixed: {}", report.n_fixed)?;
    writeln!(w, "# n_random: {}", report.n_random)?;
    writeln!(w, "# max_abs_t: {}", report.max_abs_t)?;
    writeln!(w, "# threshold: {}", report.threshold)?;
    match report.first_crossing_sample {
        Some(s) => writeln!(w, "# first_crossing_sample: {s}")?,
        None => writeln!(w, "# first_crossing_sample: none")?,
    }
    writeln!(w, "sample_index,t_score")?;
    for (i, t) in report.t.iter().enumerate() {
        writeln!(w, "{i},{t}")?;
    }
    w.flush()
}

/// `# key: value` header lines followed by `rank,hypothesis,score` rows.
pub fn write_attack_csv<W: Write>(
    mut w: W,
    report: &AttackReport,
    meta: &[(&str, String)],
) -> io::Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    writeln!(w, "# n_traces: {}", report.n_traces)?;
    if let Some(r) = report.ground_truth_rank {
        writeln!(w, "# ground_truth_rank: {r}")?;
    }
    writeln!(w, "rank,hypothesis,score")?;
    for (i, &h) in report.ranking.iter().enumerate() {
        writeln!(w, "{},{h:#b},{}", i + 1, report.scores[h as usize])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tvla_csv_layout() {
        let r = TTestReport::new(vec![0.5, -6.0], 10, 12);
        let mut out = Vec::new();
        write_tvla_csv(&mut out, &r, &[("order", "1".into())]).unwrap();
        let s = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# order: 1");
        assert!(lines.contains(&"# first_crossing_sample: 1"));
        let data: Vec<&str> = lines
            .iter()
            .copied()
            .filter(|l| !l.starts_with('#'))
            .collect();
        assert_eq!(data, ["sample_index,t_score", "0,0.5", "1,-6"]);
    }

    #[test]
    fn attack_csv_layout() {
        let r = AttackReport {
            scores: vec![0.1, 0.9],
            ranking: vec![1, 0],
            ground_truth_rank: Some(1),
            n_traces: 5,
        };
        let mut out = Vec::new();
        write_attack_csv(&mut out, &r, &[]).unwrap();
        let s = String::from_utf8(out).unwrap();
        assert!(
            s.ends_with("rank,hypothesis,score\n1,0b1,0.9\n2,0b0,0.1\n"),
            "{s}"
        );
    }
}
