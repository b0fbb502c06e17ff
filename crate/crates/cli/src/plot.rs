//! Gnuplot-ready data files from run artifacts. Nothing is rendered.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    Trajectory,
    Sweep,
    Mixing,
}

impl PlotKind {
    fn columns(self) -> (&'static str, &'static str) {
        match self {
            PlotKind::Trajectory => ("t", "x_0"),
            PlotKind::Sweep => ("epsilon", "eps_theta_log_p"),
            PlotKind::Mixing => ("T", "alpha_hat"),
        }
    }

    fn labels(self) -> (&'static str, &'static str) {
        match self {
            PlotKind::Trajectory => ("t", "x"),
            PlotKind::Sweep => ("log10 epsilon", "epsilon^theta ln p"),
            PlotKind::Mixing => ("T", "ln alpha"),
        }
    }

    fn transform(self, x: f64, y: f64) -> Option<(f64, f64)> {
        let (x, y) = match self {
            PlotKind::Trajectory => (x, y),
            PlotKind::Sweep => (x.log10(), y),
            PlotKind::Mixing => (x, y.ln()),
        };
        (x.is_finite() && y.is_finite()).then_some((x, y))
    }
}

/// Two-column data (`.dat`) plus a script stub (`.gp`); returns both paths.
pub fn emit_plot_data(artifact: &Path, kind: PlotKind, out_dir: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let text = fs::read_to_string(artifact)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let header: Vec<&str> =
        lines.next().ok_or_else(|| CliError::Config("artifact is empty".into()))?.split(',').collect();
    let (cx, cy) = kind.columns();
    let missing: Vec<&str> = [cx, cy].into_iter().filter(|c| !header.contains(c)).collect();
    if !missing.is_empty() {
        return Err(CliError::Config(format!("artifact lacks column(s): {}", missing.join(", "))));
    }
    let ix = header.iter().position(|h| *h == cx).expect("checked");
    let iy = header.iter().position(|h| *h == cy).expect("checked");
    let (lx, ly) = kind.labels();
    let mut data = format!("# {lx}\t{ly}\n");
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| cells.get(i).and_then(|c| c.trim().parse::<f64>().ok());
        if let (Some(x), Some(y)) = (parse(ix), parse(iy)) {
            if let Some((x, y)) = kind.transform(x, y) {
                data.push_str(&format!("{x}\t{y}\n"));
            }
        }
    }
    fs::create_dir_all(out_dir)?;
    let stem = artifact.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "plot".into());
    let dat = out_dir.join(format!("{stem}.dat"));
    let gp = out_dir.join(format!("{stem}.gp"));
    fs::write(&dat, data)?;
    let style = if kind == PlotKind::Trajectory { "lines" } else { "linespoints" };
    fs::write(
        &gp,
        format!("set xlabel '{lx}'\nset ylabel '{ly}'\nplot '{stem}.dat' using 1:2 with {style} notitle\n"),
    )?;
    Ok((dat, gp))
}
