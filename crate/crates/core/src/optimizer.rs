//! Numeric maximization of PKE over pair production probability and coding
//! order, plus sweep generation with CSV emission.
//!
//! Sweep cells are independent pure evaluations; they are computed in
//! parallel and assembled by cell index, so results never depend on
//! scheduling.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::DisturbanceProfile;
use crate::link::{error_rate, pke, ChannelParams, LinkPoint, RateBreakdown};
use crate::numerics::{maximize_scalar, BracketedInterval};
use crate::protocols::{ProtocolSpec, QberSet};
use crate::{Error, Result};

/// Search ranges and caps for the optimizer.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Lower edge of the pair-probability search interval.
    pub p_lo: f64,
    /// Upper edge of the pair-probability search interval.
    pub p_hi: f64,
    /// Hard cap on the coding order considered.
    pub m_cap: u32,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            p_lo: 1e-8,
            p_hi: 0.5,
            m_cap: 30,
        }
    }
}

impl OptimizerSettings {
    fn validate(&self) -> Result<()> {
        if !(self.p_lo > 0.0 && self.p_lo < self.p_hi && self.p_hi <= 0.5) {
            return Err(Error::Config(format!(
                "invalid p_pair search interval [{}, {}]",
                self.p_lo, self.p_hi
            )));
        }
        if self.m_cap < 1 || self.m_cap > 40 {
            return Err(Error::Config(format!("invalid m_cap {}", self.m_cap)));
        }
        Ok(())
    }
}

/// A link operating point minus the two optimized coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkTemplate {
    pub channel: ChannelParams,
    pub protocol: ProtocolSpec,
    pub decoherence: DisturbanceProfile,
}

impl LinkTemplate {
    pub fn at(&self, m: u32, p_pair: f64) -> Result<LinkPoint> {
        LinkPoint::new(m, p_pair, self.channel, self.protocol, self.decoherence)
    }

    fn pke_value(&self, m: u32, p_pair: f64) -> f64 {
        match self.at(m, p_pair).and_then(|point| pke(&point)) {
            Ok(report) => report.pke,
            Err(_) => f64::NAN,
        }
    }
}

/// Largest coding order for which the frame background stays below the
/// signal bound `2^m < eta / (2 n_b)` (per arm, using the worst ratio).
/// `None` when there is no background and the order is unbounded.
pub fn max_feasible_m(channel: &ChannelParams) -> Option<u32> {
    let (ra, rb) = channel.noise_ratios();
    let r = ra.max(rb);
    if r <= 0.0 {
        return None;
    }
    let bound = 0.5 / r; // slots must stay strictly below this
    let mut m = 0u32;
    while m < 40 && ((1u64 << (m + 1)) as f64) < bound {
        m += 1;
    }
    Some(m)
}

/// Result of a one-dimensional optimization over `p_pair` at fixed `m`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct POptimum {
    pub p_star: f64,
    pub pke_star: f64,
    /// Set when the maximum is a plateau or sits on the lower interval edge
    /// (the background-free case has no interior maximum).
    pub flat: bool,
    /// Set when PKE is nonpositive over the whole interval.
    pub zero_key: bool,
}

/// Maximize PKE over `p_pair` at fixed coding order, log-scale grid search
/// followed by golden-section refinement.
pub fn optimize_p(
    template: &LinkTemplate,
    m: u32,
    settings: &OptimizerSettings,
) -> Result<POptimum> {
    settings.validate()?;
    let interval = BracketedInterval::new(settings.p_lo, settings.p_hi)?;
    let (p_star, pke_star) = maximize_scalar(|p| template.pke_value(m, p), interval, true)?;

    if pke_star <= 0.0 {
        return Ok(POptimum {
            p_star: settings.p_lo,
            pke_star: 0.0,
            flat: false,
            zero_key: true,
        });
    }

    // Plateau probe: the maximum counts as flat when PKE stays within 0.1%
    // of the peak across a decade around it, or when the search ran into the
    // lower edge.
    let at_edge = p_star <= settings.p_lo * 1.01;
    let mut plateau = true;
    for step in [-4i32, -3, -2, -1, 1, 2, 3, 4] {
        let p = p_star * 10f64.powf(step as f64 / 8.0);
        if p < settings.p_lo || p > settings.p_hi {
            continue;
        }
        let v = template.pke_value(m, p);
        if !(v >= pke_star * (1.0 - 1e-3)) {
            plateau = false;
            break;
        }
    }

    Ok(POptimum {
        p_star,
        pke_star,
        flat: at_edge || plateau,
        zero_key: false,
    })
}

/// Joint optimum over coding order and pair production probability.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub m_star: u32,
    pub p_pair_star: f64,
    pub pke_star: f64,
    pub qber_at_opt: QberSet,
    /// Event bracket at the optimum.
    pub event_breakdown: RateBreakdown,
    /// Error bracket at the optimum, evaluated at the average disturbance.
    pub error_breakdown: RateBreakdown,
    pub flat_flag: bool,
    pub zero_key: bool,
    /// Highest coding order probed by the search.
    pub m_searched_max: u32,
    /// Feasibility cap `2^m < eta/(2 n_b)` when background is present.
    pub m_feasible_max: Option<u32>,
}

impl OptimizationResult {
    /// Flags column used in CSV emission: semicolon-joined, stable order.
    pub fn flags(&self) -> String {
        let mut tokens = Vec::new();
        if self.flat_flag {
            tokens.push("flat");
        }
        if self.zero_key {
            tokens.push("zero-key");
        }
        tokens.join(";")
    }
}

/// Optimize PKE over `m` in `1..=m_max` and `p_pair`, where `m_max` caps at
/// the configured limit and, under background noise, at two orders above the
/// feasibility bound. Only feasible orders can win; ties break toward
/// smaller `m`.
pub fn optimize_pm(
    template: &LinkTemplate,
    settings: &OptimizerSettings,
) -> Result<OptimizationResult> {
    settings.validate()?;
    let feasible = max_feasible_m(&template.channel);
    let search_max = match feasible {
        Some(mf) => (mf + 2).clamp(1, settings.m_cap),
        None => settings.m_cap,
    };
    let feasible_cap = feasible.unwrap_or(search_max);

    let mut best: Option<(u32, POptimum)> = None;
    for m in 1..=search_max {
        let opt = optimize_p(template, m, settings)?;
        if m > feasible_cap {
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, b)) => opt.pke_star > b.pke_star,
        };
        if better {
            best = Some((m, opt));
        }
    }

    let (m_star, p_opt) = best.unwrap_or((
        1,
        POptimum {
            p_star: settings.p_lo,
            pke_star: 0.0,
            flat: false,
            zero_key: true,
        },
    ));

    let point = template.at(m_star, p_opt.p_star)?;
    let report = pke(&point)?;
    let d_avg = template.decoherence.d_avg();
    Ok(OptimizationResult {
        m_star,
        p_pair_star: p_opt.p_star,
        pke_star: p_opt.pke_star,
        qber_at_opt: report.qbers,
        event_breakdown: report.event,
        error_breakdown: error_rate(&point, d_avg),
        flat_flag: p_opt.flat,
        zero_key: p_opt.zero_key,
        m_searched_max: search_max,
        m_feasible_max: feasible,
    })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// One sweep axis: `count` values from `lo` to `hi`, log or linear spacing.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub log: bool,
}

impl AxisSpec {
    pub fn new(name: &str, lo: f64, hi: f64, count: usize, log: bool) -> Result<Self> {
        if count == 0 || (count > 1 && !(lo < hi)) || (log && lo <= 0.0) {
            return Err(Error::Config(format!(
                "invalid axis {name:?}: lo = {lo}, hi = {hi}, count = {count}"
            )));
        }
        Ok(Self {
            name: name.to_string(),
            lo,
            hi,
            count,
            log,
        })
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.lo];
        }
        let n = self.count;
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                if self.log {
                    (self.lo.ln() + t * (self.hi.ln() - self.lo.ln())).exp()
                } else {
                    self.lo + t * (self.hi - self.lo)
                }
            })
            .collect()
    }
}

/// What a sweep varies per cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum SweepKind {
    /// Common noise-to-transmission ratio on both arms; each cell runs the
    /// full (m, p_pair) optimization.
    NoiseRatio { axis: AxisSpec },
    /// Independent per-arm noise ratios over a 2-D grid.
    NoiseRatio2D { axis_a: AxisSpec, axis_b: AxisSpec },
    /// Pair production probability at fixed coding order; cells evaluate PKE
    /// directly without optimizing.
    PairProbability { axis: AxisSpec, m: u32 },
}

/// A sweep: base operating template plus the varied coordinates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepGrid {
    pub base: LinkTemplate,
    pub kind: SweepKind,
    pub settings: OptimizerSettings,
}

/// One evaluated sweep cell. Failures are recorded and never abort the
/// sweep.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub ratio_a: f64,
    pub ratio_b: f64,
    pub result: std::result::Result<OptimizationResult, String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepResult {
    pub protocol: String,
    pub cells: Vec<SweepCell>,
    /// Rows (axis-a length) and columns (axis-b length) of the cell matrix.
    pub shape: (usize, usize),
}

fn channel_with_ratios(base: &ChannelParams, ratio_a: f64, ratio_b: f64) -> Result<ChannelParams> {
    ChannelParams::with_dt(
        base.eta_a,
        base.eta_b,
        ratio_a * base.eta_a,
        ratio_b * base.eta_b,
        base.dt,
    )
}

/// Evaluate every cell of the grid. Cells are independent; evaluation order
/// carries no state and the output vector is indexed by cell position.
pub fn sweep(grid: &SweepGrid) -> Result<SweepResult> {
    grid.settings.validate()?;
    // Work items: (ratio_a, ratio_b, fixed (m, p_pair) for non-optimizing
    // sweeps).
    let work: Vec<(f64, f64, Option<(u32, f64)>)> = match &grid.kind {
        SweepKind::NoiseRatio { axis } => axis.values().iter().map(|&r| (r, r, None)).collect(),
        SweepKind::NoiseRatio2D { axis_a, axis_b } => {
            let vb = axis_b.values();
            axis_a
                .values()
                .iter()
                .flat_map(|&ra| vb.iter().map(move |&rb| (ra, rb, None)))
                .collect()
        }
        SweepKind::PairProbability { axis, m } => {
            let (ra, rb) = grid.base.channel.noise_ratios();
            axis.values()
                .iter()
                .map(|&p| (ra, rb, Some((*m, p))))
                .collect()
        }
    };

    let shape = match &grid.kind {
        SweepKind::NoiseRatio { axis } => (axis.count, 1),
        SweepKind::NoiseRatio2D { axis_a, axis_b } => (axis_a.count, axis_b.count),
        SweepKind::PairProbability { axis, .. } => (axis.count, 1),
    };

    let evaluated: Vec<SweepCell> = work
        .par_iter()
        .map(|&(ratio_a, ratio_b, fixed)| {
            let result = evaluate_cell(grid, ratio_a, ratio_b, fixed).map_err(|e| e.to_string());
            SweepCell {
                ratio_a,
                ratio_b,
                result,
            }
        })
        .collect();

    Ok(SweepResult {
        protocol: grid.base.protocol.id.as_str().to_string(),
        cells: evaluated,
        shape,
    })
}

fn evaluate_cell(
    grid: &SweepGrid,
    ratio_a: f64,
    ratio_b: f64,
    fixed: Option<(u32, f64)>,
) -> Result<OptimizationResult> {
    let template = LinkTemplate {
        channel: channel_with_ratios(&grid.base.channel, ratio_a, ratio_b)?,
        protocol: grid.base.protocol,
        decoherence: grid.base.decoherence,
    };
    match fixed {
        None => optimize_pm(&template, &grid.settings),
        Some((m, p_pair)) => {
            let point = template.at(m, p_pair)?;
            let report = pke(&point)?;
            let d_avg = template.decoherence.d_avg();
            Ok(OptimizationResult {
                m_star: m,
                p_pair_star: p_pair,
                pke_star: report.pke,
                qber_at_opt: report.qbers,
                event_breakdown: report.event.clone(),
                error_breakdown: error_rate(&point, d_avg),
                flat_flag: false,
                zero_key: report.pke <= 0.0,
                m_searched_max: m,
                m_feasible_max: max_feasible_m(&template.channel),
            })
        }
    }
}

/// Write a sweep as CSV with the fixed header
/// `n_ratio_A,n_ratio_B,protocol,m_star,p_pair_star,pke,e_X,e_Z,flags`.
/// Floating-point columns carry 12 significant digits.
pub fn write_csv<W: Write>(result: &SweepResult, out: &mut W) -> io::Result<()> {
    writeln!(
        out,
        "n_ratio_A,n_ratio_B,protocol,m_star,p_pair_star,pke,e_X,e_Z,flags"
    )?;
    for cell in &result.cells {
        match &cell.result {
            Ok(r) => writeln!(
                out,
                "{:.11e},{:.11e},{},{},{:.11e},{:.11e},{:.11e},{:.11e},{}",
                cell.ratio_a,
                cell.ratio_b,
                result.protocol,
                r.m_star,
                r.p_pair_star,
                r.pke_star,
                r.qber_at_opt.e_x.value(),
                r.qber_at_opt.e_z.value(),
                r.flags()
            )?,
            Err(msg) => writeln!(
                out,
                "{:.11e},{:.11e},{},0,nan,nan,nan,nan,failed:{}",
                cell.ratio_a,
                cell.ratio_b,
                result.protocol,
                msg.replace([',', '\n'], ";")
            )?,
        }
    }
    Ok(())
}
