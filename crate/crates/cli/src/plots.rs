//! Gnuplot script for result tables already written to disk.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::output::write_text;
use crate::CliError;

pub const SCRIPT_NAME: &str = "plots.gp";

/// Header of a CSV file, or `None` when the file is absent.
fn header(path: &Path) -> Result<Option<(Vec<String>, usize)>, CliError> {
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let head = lines.next().unwrap_or("").split(',').map(str::to_string).collect();
    Ok(Some((head, lines.count())))
}

/// 1-based column indices of `wanted`, or a schema error naming the first
/// missing column.
fn columns(file: &str, head: &[String], wanted: &[&str]) -> Result<Vec<usize>, CliError> {
    wanted
        .iter()
        .map(|w| {
            head.iter()
                .position(|h| h == w)
                .map(|i| i + 1)
                .ok_or_else(|| CliError::Schema(format!("{file}: missing column '{w}'")))
        })
        .collect()
}

fn panel(out: &mut String, svg: &str, title: &str, xlabel: &str, ylabel: &str, body: &str) {
    let _ = writeln!(out, "set output '{svg}'");
    let _ = writeln!(out, "set title '{title}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'");
    let _ = writeln!(out, "{body}\n");
}

/// Writes `plots.gp` into `dir` for every recognized table there:
/// the normalized-sum histogram against the normal density (and the
/// Edgeworth density when present), the CDF comparison, `λ(s)` and the
/// MLCLT sup deviation against `n`. Returns the script path, if any panel
/// applied, and warnings.
pub fn emit_plots(dir: &Path) -> Result<(Option<PathBuf>, Vec<String>), CliError> {
    let mut warnings = Vec::new();
    let mut body = String::from("set terminal svg size 800,500\nset datafile separator ','\nset key top right\n\n");
    let mut panels = 0;

    let hist = [("edgeworth_hist.csv", true), ("clt_hist.csv", false)]
        .into_iter()
        .find(|(f, _)| dir.join(f).exists());
    if let Some((file, with_edgeworth)) = hist {
        let (head, _) = header(&dir.join(file))?.expect("file exists");
        let mut want = vec!["x", "density", "gaussian"];
        if with_edgeworth {
            want.push("edgeworth");
        }
        let c = columns(file, &head, &want)?;
        let mut plot = format!(
            "plot '{file}' every ::1 using {}:{} with boxes title 'normalized sums', \\\n     '' every ::1 using {}:{} with lines lw 2 title 'normal density'",
            c[0], c[1], c[0], c[2]
        );
        if with_edgeworth {
            let _ = write!(plot, ", \\\n     '' every ::1 using {}:{} with lines lw 2 dt 2 title 'Edgeworth density'", c[0], c[3]);
        }
        panel(&mut body, "histogram.svg", "Normalized Birkhoff sums", "x", "density", &format!("set style fill transparent solid 0.4\n{plot}"));
        panels += 1;
    }

    if let Some((head, _)) = header(&dir.join("edgeworth_cdf.csv"))? {
        let c = columns("edgeworth_cdf.csv", &head, &["x", "empirical", "gaussian", "edgeworth"])?;
        let plot = format!(
            "plot 'edgeworth_cdf.csv' every ::1 using {0}:({1}-{2}) with lines title 'empirical − normal', \\\n     '' every ::1 using {0}:({3}-{2}) with lines dt 2 title 'Edgeworth − normal'",
            c[0],
            format_args!("${}", c[1]),
            format_args!("${}", c[2]),
            format_args!("${}", c[3]),
        );
        panel(&mut body, "cdf.svg", "CDF corrections", "x", "difference to the normal CDF", &plot);
        panels += 1;
    }

    if let Some((head, rows)) = header(&dir.join("spectrum.csv"))? {
        let c = columns("spectrum.csv", &head, &["s", "lambda_re", "lambda_im", "lambda_abs"])?;
        if rows == 0 {
            warnings.push("spectrum.csv has no rows; λ(s) plot omitted".into());
        } else {
            let plot = format!(
                "plot 'spectrum.csv' every ::1 using {}:{} with linespoints title 'Re λ', \\\n     '' every ::1 using {}:{} with linespoints title 'Im λ', \\\n     '' every ::1 using {}:{} with lines dt 2 title '|λ|'",
                c[0], c[1], c[0], c[2], c[0], c[3]
            );
            panel(&mut body, "lambda.svg", "Leading eigenvalue", "s", "λ(s)", &plot);
            panels += 1;
        }
    }

    if let Some((head, _)) = header(&dir.join("mlclt_sup.csv"))? {
        let c = columns("mlclt_sup.csv", &head, &["n", "sup_deviation"])?;
        let plot = format!(
            "set logscale xy\nplot 'mlclt_sup.csv' every ::1 using {}:{} with linespoints title 'sup deviation'\nunset logscale",
            c[0], c[1]
        );
        panel(&mut body, "mlclt.svg", "MLCLT deviation", "n", "sup over windows", &plot);
        panels += 1;
    }

    if panels == 0 {
        warnings.push("no plottable tables; plot script omitted".into());
        return Ok((None, warnings));
    }
    Ok((Some(write_text(dir, SCRIPT_NAME, &body)?), warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_column_is_named() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("clt_hist.csv"), "x,density\n0,1\n").unwrap();
        match emit_plots(dir.path()) {
            Err(CliError::Schema(msg)) => assert!(msg.contains("'gaussian'"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_spectrum_is_omitted() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("spectrum.csv"), "s,lambda_re,lambda_im,lambda_abs,gap\n").unwrap();
        let (script, warnings) = emit_plots(dir.path()).unwrap();
        assert!(script.is_none());
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn edgeworth_overlay() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("edgeworth_hist.csv"), "x,density,gaussian,edgeworth\n0,0.4,0.4,0.39\n").unwrap();
        let (script, _) = emit_plots(dir.path()).unwrap();
        let text = std::fs::read_to_string(script.unwrap()).unwrap();
        assert!(text.contains("Edgeworth density") && text.contains("normal density"));
    }
}
