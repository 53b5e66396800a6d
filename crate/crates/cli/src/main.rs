use birkhoff_lab_cli::output::brief;

fn main() {
    let outcome = birkhoff_lab_cli::run_from(std::env::args_os());
    if let Some(report) = &outcome.report {
        let line = brief(&report.summary);
        if !line.is_empty() {
            println!("{line}");
        }
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
    if let Some(e) = &outcome.error {
        eprintln!("{e}");
    }
    for p in &outcome.outputs {
        eprintln!("wrote {}", p.display());
    }
    std::process::exit(outcome.exit_code);
}
