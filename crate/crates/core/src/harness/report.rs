use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{moving_average, Bundle, EpisodeRecord, HarnessError};

/// Across-seed mean at one episode index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub trial: usize,
    /// Seeds that reached this episode.
    pub runs: usize,
    #[serde(rename = "mean-primitive-step")]
    pub mean_step: f64,
    #[serde(rename = "mean-return")]
    pub mean_return: f64,
    /// `mean_return` after the moving average.
    pub smoothed: f64,
}

pub fn write_episode_csv<W: Write>(w: W, rows: &[EpisodeRecord]) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_episode_csv<R: Read>(r: R) -> Result<Vec<EpisodeRecord>, HarnessError> {
    csv::Reader::from_reader(r).deserialize().map(|x| x.map_err(HarnessError::from)).collect()
}

/// Mean return and step count per episode index over the seeds that got there.
pub fn averaged_curve(bundle: &Bundle, window: usize) -> Vec<CurvePoint> {
    let longest = bundle.runs.iter().map(|r| r.episodes.len()).max().unwrap_or(0);
    let mut points: Vec<CurvePoint> = (0..longest)
        .map(|t| {
            let rows: Vec<&EpisodeRecord> = bundle.runs.iter().filter_map(|r| r.episodes.get(t)).collect();
            let n = rows.len() as f64;
            CurvePoint {
                trial: t,
                runs: rows.len(),
                mean_step: rows.iter().map(|r| r.primitive_step as f64).sum::<f64>() / n,
                mean_return: rows.iter().map(|r| r.episode_return).sum::<f64>() / n,
                smoothed: 0.0,
            }
        })
        .collect();
    let means: Vec<f64> = points.iter().map(|p| p.mean_return).collect();
    for (p, m) in points.iter_mut().zip(moving_average(&means, window)) {
        p.smoothed = m;
    }
    points
}

fn accounting_text(bundle: &Bundle) -> String {
    let cfg = &bundle.config;
    let mut s = String::new();
    let _ = writeln!(s, "environment: {}", cfg.env);
    let _ = writeln!(s, "method: {}", cfg.method.label());
    let _ = writeln!(s, "flat Q entries: {}", bundle.accounting.flat_q);
    if let Some(r) = &bundle.accounting.report {
        let _ = writeln!(s, "hierarchical entries ({:?} keys): {}", r.mode, r.total());
        let _ = writeln!(s);
        let _ = writeln!(s, "{r}");
    }
    s
}

fn plot_script(name: &str) -> String {
    format!(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'primitive steps'\nset ylabel 'mean return'\n\
         plot '{name}-curve.csv' using 3:5 with lines title '{name}'\n"
    )
}

/// Writes the selected reports of `bundle` into `dir` and returns the paths.
pub fn emit_report(bundle: &Bundle, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    let cfg = &bundle.config;
    let name = &cfg.name;
    let mut written = Vec::new();
    if cfg.reports.curves {
        let rows: Vec<EpisodeRecord> = bundle.runs.iter().flat_map(|r| r.episodes.iter().copied()).collect();
        let path = dir.join(format!("{name}-episodes.csv"));
        write_episode_csv(std::fs::File::create(&path)?, &rows)?;
        written.push(path);

        let path = dir.join(format!("{name}-curve.csv"));
        let mut w = csv::Writer::from_path(&path)?;
        for p in averaged_curve(bundle, cfg.reports.moving_average) {
            w.serialize(p)?;
        }
        w.flush()?;
        written.push(path);

        let checkpoints: Vec<_> = bundle.runs.iter().flat_map(|r| r.checkpoints.iter()).collect();
        if !checkpoints.is_empty() {
            let path = dir.join(format!("{name}-checkpoints.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            for c in checkpoints {
                w.serialize(c)?;
            }
            w.flush()?;
            written.push(path);
        }
    }
    if cfg.reports.accounting {
        let path = dir.join(format!("{name}-accounting.txt"));
        std::fs::write(&path, accounting_text(bundle))?;
        written.push(path);
    }
    if cfg.reports.plot_script {
        let path = dir.join(format!("{name}.gp"));
        std::fs::write(&path, plot_script(name))?;
        written.push(path);
    }
    let failed: Vec<_> = bundle.runs.iter().filter_map(|r| r.error.as_ref().map(|e| format!("seed {}: {e}", r.seed))).collect();
    if !failed.is_empty() {
        let path = dir.join(format!("{name}-errors.txt"));
        std::fs::write(&path, failed.join("\n") + "\n")?;
        written.push(path);
    }
    Ok(written)
}
