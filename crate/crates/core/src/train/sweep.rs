use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::dataset::Split;
use crate::arrn::{ArrnModel, EntryPolicy};
use crate::error::{Error, Result};
use crate::nn::{accuracy, Mode};
use crate::real::Real;
use crate::signal::GridSpec;

pub const CSV_HEADER: &str = "resolution,mode,kernel,dropout,accuracy,macs,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Interpolate to the finest grid and run every residual.
    Full,
    /// Enter at the input's ladder level.
    Adapted,
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Full => "full",
            EvalMode::Adapted => "adapted",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(EvalMode::Full),
            "adapted" => Ok(EvalMode::Adapted),
            _ => Err(Error::InvalidArgument(format!("unknown mode `{s}` (expected full or adapted)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub resolution: GridSpec,
    pub mode: EvalMode,
    pub kernel: String,
    pub dropout: bool,
    pub accuracy: f64,
    /// Multiply-accumulates per sample.
    pub macs: u64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub policy: EntryPolicy,
    pub batch: usize,
    /// Record wall-clock time; otherwise `wall_ms` is 0 and the output is
    /// reproducible byte for byte.
    pub timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { policy: EntryPolicy::PreferFiner, batch: 256, timing: false }
    }
}

/// Accuracy and cost of `model` on `test` lowered to each resolution
/// (spectral downsampling), once per mode.
pub fn evaluate_sweep<T: Real>(
    model: &ArrnModel<T>,
    test: &Split<T>,
    resolutions: &[GridSpec],
    modes: &[EvalMode],
    dropout: bool,
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    let classes = model.config().classes;
    let kernel = model.config().kernel.label().to_string();
    let base = model.ladder().level(0);
    if let Some(g) = resolutions.iter().find(|g| !g.fits_within(base)) {
        return Err(Error::Shape(format!("sweep resolution {g} exceeds the finest grid {base}")));
    }
    let mut rows = Vec::with_capacity(resolutions.len() * modes.len());
    for grid in resolutions {
        let lowered = test.resampled(grid);
        for &mode in modes {
            let start = Instant::now();
            let idx: Vec<usize> = (0..lowered.len()).collect();
            let mut hits = 0.0;
            let mut level = 0;
            for chunk in idx.chunks(options.batch.max(1)) {
                let (x, labels) = lowered.gather(chunk);
                let logits = match mode {
                    EvalMode::Full => model.forward_full_at(&x, Mode::Eval)?,
                    EvalMode::Adapted => {
                        let (l, logits) = model.forward_at(&x, options.policy, Mode::Eval)?;
                        level = l;
                        logits
                    }
                };
                hits += accuracy(logits.values(), classes, &labels) * chunk.len() as f64;
            }
            let wall_ms = if options.timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
            rows.push(SweepRow {
                resolution: grid.clone(),
                mode,
                kernel: kernel.clone(),
                dropout,
                accuracy: hits / lowered.len().max(1) as f64,
                macs: model.count_macs(level),
                wall_ms,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{:.6},{},{:.3}\n",
            r.resolution,
            r.mode,
            r.kernel,
            if r.dropout { "on" } else { "off" },
            r.accuracy,
            r.macs,
            r.wall_ms
        ));
    }
    out
}

/// Accuracy against input size, one polyline per (mode, kernel, dropout).
pub fn sweep_svg(rows: &[SweepRow]) -> String {
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let size = |g: &GridSpec| g.len() as f64;
    let xmax = rows.iter().map(|r| size(&r.resolution)).fold(1.0, f64::max);
    let xmin = rows.iter().map(|r| size(&r.resolution)).fold(xmax, f64::min);
    let span = (xmax - xmin).max(1.0);
    let px = |s: f64| pad + (s - xmin) / span * (w - 2.0 * pad);
    let py = |a: f64| h - pad - a * (h - 2.0 * pad);
    let mut keys: Vec<(EvalMode, String, bool)> = rows.iter().map(|r| (r.mode, r.kernel.clone(), r.dropout)).collect();
    keys.sort();
    keys.dedup();
    let colours = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>\n\
         <text x=\"{}\" y=\"{}\" text-anchor=\"middle\">input samples</text>\n\
         <text x=\"12\" y=\"{}\" transform=\"rotate(-90 12 {})\" text-anchor=\"middle\">accuracy</text>\n",
        h - pad,
        w - pad,
        h - pad,
        h - pad,
        w / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0
    );
    for a in [0.0, 0.25, 0.5, 0.75, 1.0] {
        svg.push_str(&format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{a:.2}</text>\n", pad - 6.0, py(a) + 4.0));
    }
    for (i, (mode, kernel, dropout)) in keys.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.mode == *mode && &r.kernel == kernel && r.dropout == *dropout)
            .map(|r| (size(&r.resolution), r.accuracy))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let colour = colours[i % colours.len()];
        let line: Vec<String> = pts.iter().map(|&(s, a)| format!("{:.1},{:.1}", px(s), py(a))).collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{colour}\" stroke-width=\"2\" points=\"{}\"/>\n",
            line.join(" ")
        ));
        let label = format!("{mode} {kernel} dropout {}", if *dropout { "on" } else { "off" });
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{colour}\">{label}</text>\n",
            pad + 10.0,
            pad + 14.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
