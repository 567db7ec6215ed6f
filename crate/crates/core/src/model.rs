//! The five CAViaR-type VaR/ES recursions.
//!
//! Every variant shares the ES gap recursion
//!
//! ```text
//! ES_t = Q_t - w_t
//! w_t  = g1 + g2 (Q_{t-1} - r_{t-1}) + g3 w_{t-1}   if r_{t-1} <= Q_{t-1}
//!      = w_{t-1}                                     otherwise
//! ```
//!
//! and differs only in the quantile equation. Quantile equations use the
//! lagged return and realized volatility together with the *current*
//! overnight return, which is observed at the market open of day `t`.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketSeries;
use crate::stats;

/// Distance from a constraint boundary used when projecting starting values.
pub const PROJECTION_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// `Q_t = b1 + b2 I(r>0)|r| + b3 I(r<=0)|r| + b4 Q_{t-1}` (lagged return r).
    EsCaviar,
    /// `Q_t = b1 + b2 Q_{t-1} + b3 RV_{t-1}`.
    ResCaviar,
    /// `Q_t = b1 + b2 Q_{t-1} + b3 I(OC>0)|OC| + b4 I(OC<=0)|OC|`.
    EsCaviarOc,
    /// `Q_t = b1 + b2 Q_{t-1} + b3 RV_{t-1} + b4 I(OC<=0)|OC|`.
    ResCaviarOcMinus,
    /// `Q_t = b1 + b2 Q_{t-1} + b3 RV_{t-1} + b4 I(OC>0)|OC| + b5 I(OC<=0)|OC|`.
    ResCaviarOc,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::ResCaviar,
        Variant::EsCaviar,
        Variant::EsCaviarOc,
        Variant::ResCaviarOcMinus,
        Variant::ResCaviarOc,
    ];

    /// Number of quantile-equation coefficients.
    pub fn k(self) -> usize {
        match self {
            Variant::ResCaviar => 3,
            Variant::EsCaviar | Variant::EsCaviarOc | Variant::ResCaviarOcMinus => 4,
            Variant::ResCaviarOc => 5,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Variant::EsCaviar => "es-caviar",
            Variant::ResCaviar => "res-caviar",
            Variant::EsCaviarOc => "es-caviar-oc",
            Variant::ResCaviarOcMinus => "res-caviar-oc-minus",
            Variant::ResCaviarOc => "res-caviar-oc",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Variant::EsCaviar => "ES-CAViaR",
            Variant::ResCaviar => "RES-CAViaR",
            Variant::EsCaviarOc => "ES-CAViaR-oc",
            Variant::ResCaviarOcMinus => "RES-CAViaR-oc-",
            Variant::ResCaviarOc => "RES-CAViaR-oc",
        }
    }

    pub fn uses_overnight(self) -> bool {
        matches!(
            self,
            Variant::EsCaviarOc | Variant::ResCaviarOcMinus | Variant::ResCaviarOc
        )
    }

    /// Index of the autoregressive coefficient, constrained to (-1, 1).
    pub fn ar_index(self) -> usize {
        match self {
            Variant::EsCaviar => 3,
            _ => 1,
        }
    }

    /// Index of the realized-volatility coefficient, constrained to be negative.
    pub fn rv_index(self) -> Option<usize> {
        match self {
            Variant::ResCaviar | Variant::ResCaviarOcMinus | Variant::ResCaviarOc => Some(2),
            _ => None,
        }
    }

    /// Index of the negative-overnight coefficient, constrained to be negative.
    pub fn neg_oc_index(self) -> Option<usize> {
        match self {
            Variant::EsCaviarOc | Variant::ResCaviarOcMinus => Some(3),
            Variant::ResCaviarOc => Some(4),
            _ => None,
        }
    }

    pub fn param_names(self) -> Vec<String> {
        (1..=self.k())
            .map(|i| format!("beta{i}"))
            .chain((1..=3).map(|i| format!("gamma{i}")))
            .collect()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.id() == norm || v.display_name().to_ascii_lowercase() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model variant `{s}`")))
    }
}

/// A variant together with its probability level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub alpha: f64,
}

impl ModelSpec {
    pub fn new(variant: Variant, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 0.5), got {alpha}"
            )));
        }
        Ok(Self { variant, alpha })
    }

    pub fn k(&self) -> usize {
        self.variant.k()
    }

    pub fn dim(&self) -> usize {
        self.k() + 3
    }
}

/// Quantile coefficients `beta` and gap coefficients `gamma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub beta: Vec<f64>,
    pub gamma: [f64; 3],
}

impl ParamVector {
    pub fn new(beta: Vec<f64>, gamma: [f64; 3]) -> Self {
        Self { beta, gamma }
    }

    /// The default starting point: every beta at -0.1, every gamma at 0.1.
    pub fn initial(variant: Variant) -> Self {
        Self {
            beta: vec![-0.1; variant.k()],
            gamma: [0.1; 3],
        }
    }

    /// Flattened `(beta', gamma')`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(&self.gamma);
        v
    }

    pub fn from_flat(variant: Variant, flat: &[f64]) -> Result<Self> {
        let k = variant.k();
        if flat.len() != k + 3 {
            return Err(Error::Dimension {
                variant: variant.id(),
                expected: k,
                got: flat.len().saturating_sub(3),
            });
        }
        Ok(Self {
            beta: flat[..k].to_vec(),
            gamma: [flat[k], flat[k + 1], flat[k + 2]],
        })
    }

    pub fn check_dim(&self, variant: Variant) -> Result<()> {
        if self.beta.len() != variant.k() {
            return Err(Error::Dimension {
                variant: variant.id(),
                expected: variant.k(),
                got: self.beta.len(),
            });
        }
        Ok(())
    }

    /// Whether the variant's constraint set holds (the support of the flat prior).
    pub fn satisfies_constraints(&self, variant: Variant) -> bool {
        if self.beta.len() != variant.k() {
            return false;
        }
        if self.beta.iter().chain(self.gamma.iter()).any(|x| !x.is_finite()) {
            return false;
        }
        let ar = self.beta[variant.ar_index()];
        if !(ar > -1.0 && ar < 1.0) {
            return false;
        }
        if let Some(i) = variant.rv_index() {
            if !(self.beta[i] < 0.0) {
                return false;
            }
        }
        if let Some(i) = variant.neg_oc_index() {
            if !(self.beta[i] < 0.0) {
                return false;
            }
        }
        let [g1, g2, g3] = self.gamma;
        g1 >= 0.0 && g2 >= 0.0 && (0.0..1.0).contains(&g3)
    }

    /// Moves every constraint-violating coordinate to the nearest interior
    /// point `PROJECTION_MARGIN` away from the boundary.
    pub fn project(&self, variant: Variant) -> Self {
        let mut p = self.clone();
        let m = PROJECTION_MARGIN;
        let ar = variant.ar_index();
        p.beta[ar] = p.beta[ar].clamp(-1.0 + m, 1.0 - m);
        for i in [variant.rv_index(), variant.neg_oc_index()].into_iter().flatten() {
            if p.beta[i] >= 0.0 {
                p.beta[i] = -m;
            }
        }
        for g in &mut p.gamma[..2] {
            if *g < 0.0 {
                *g = m;
            }
        }
        if p.gamma[2] < 0.0 {
            p.gamma[2] = m;
        } else if p.gamma[2] >= 1.0 {
            p.gamma[2] = 1.0 - m;
        }
        p
    }
}

/// VaR/ES state at the time point preceding a recursion window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    pub q0: f64,
    pub es0: f64,
}

impl InitialState {
    pub fn new(q0: f64, es0: f64) -> Result<Self> {
        if !(q0 < 0.0) || !(es0 <= q0) || !es0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "initial state needs es0 <= q0 < 0, got q0 = {q0}, es0 = {es0}"
            )));
        }
        Ok(Self { q0, es0 })
    }

    pub fn w0(&self) -> f64 {
        self.q0 - self.es0
    }

    /// Empirical alpha-quantile of the returns and the mean of the returns at
    /// or below it (`1.2 * q0` if none fall there).
    pub fn from_returns(returns: &[f64], alpha: f64) -> Result<Self> {
        if returns.is_empty() {
            return Err(Error::InsufficientData(
                "no returns for the initial VaR/ES".into(),
            ));
        }
        let q0 = stats::quantile(returns, alpha);
        let tail: Vec<f64> = returns.iter().copied().filter(|&x| x <= q0).collect();
        let es0 = if tail.is_empty() {
            1.2 * q0
        } else {
            stats::mean(&tail)
        };
        Self::new(q0, es0)
    }
}

/// Quantile equation for one step.
#[inline]
pub fn quantile_step(
    variant: Variant,
    beta: &[f64],
    q_prev: f64,
    r_prev: f64,
    rv_prev: f64,
    oc_curr: f64,
) -> f64 {
    let pos = |x: f64| if x > 0.0 { x } else { 0.0 };
    let neg = |x: f64| if x <= 0.0 { -x } else { 0.0 };
    match variant {
        Variant::EsCaviar => {
            beta[0] + beta[1] * pos(r_prev) + beta[2] * neg(r_prev) + beta[3] * q_prev
        }
        Variant::ResCaviar => beta[0] + beta[1] * q_prev + beta[2] * rv_prev,
        Variant::EsCaviarOc => {
            beta[0] + beta[1] * q_prev + beta[2] * pos(oc_curr) + beta[3] * neg(oc_curr)
        }
        Variant::ResCaviarOcMinus => {
            beta[0] + beta[1] * q_prev + beta[2] * rv_prev + beta[3] * neg(oc_curr)
        }
        Variant::ResCaviarOc => {
            beta[0]
                + beta[1] * q_prev
                + beta[2] * rv_prev
                + beta[3] * pos(oc_curr)
                + beta[4] * neg(oc_curr)
        }
    }
}

/// Checked form of [`quantile_step`].
pub fn quantile_step_checked(
    spec: &ModelSpec,
    params: &ParamVector,
    q_prev: f64,
    r_prev: f64,
    rv_prev: f64,
    oc_curr: f64,
) -> Result<f64> {
    params.check_dim(spec.variant)?;
    Ok(quantile_step(
        spec.variant,
        &params.beta,
        q_prev,
        r_prev,
        rv_prev,
        oc_curr,
    ))
}

/// ES gap recursion. A return at or below the previous VaR counts as a violation.
#[inline]
pub fn gap_step(gamma: &[f64; 3], q_prev: f64, r_prev: f64, w_prev: f64) -> f64 {
    if r_prev <= q_prev {
        gamma[0] + gamma[1] * (q_prev - r_prev) + gamma[2] * w_prev
    } else {
        w_prev
    }
}

/// VaR, gap and ES trajectories over a window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPath {
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub es: Vec<f64>,
}

impl RiskPath {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// `date,q,es` rows for the window `[start, start + len)` of `series`.
    pub fn write_csv<W: Write>(&self, series: &MarketSeries, start: usize, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "q", "es"])?;
        for i in 0..self.len() {
            w.write_record(&[
                series.dates()[start + i].format("%Y-%m-%d").to_string(),
                self.q[i].to_string(),
                self.es[i].to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Streaming evaluation of the recursion; shared by the path builder and the
/// likelihood so both see identical arithmetic.
pub(crate) struct Recursion<'a> {
    variant: Variant,
    beta: &'a [f64],
    gamma: &'a [f64; 3],
    r: &'a [f64],
    rv: &'a [f64],
    oc: &'a [f64],
    t: usize,
    end: usize,
    q: f64,
    w: f64,
}

impl<'a> Recursion<'a> {
    pub(crate) fn new(
        variant: Variant,
        params: &'a ParamVector,
        series: &'a MarketSeries,
        init: &InitialState,
        window: Range<usize>,
    ) -> Self {
        Self {
            variant,
            beta: &params.beta,
            gamma: &params.gamma,
            r: series.r(),
            rv: series.rv(),
            oc: series.oc(),
            t: window.start,
            end: window.end,
            q: init.q0,
            w: init.w0(),
        }
    }
}

impl Iterator for Recursion<'_> {
    /// `(t, q_t, w_t)`
    type Item = (usize, f64, f64);

    #[inline]
    fn next(&mut self) -> Option<Self::Item> {
        if self.t >= self.end {
            return None;
        }
        let t = self.t;
        let r_prev = self.r[t - 1];
        let q = quantile_step(
            self.variant,
            self.beta,
            self.q,
            r_prev,
            self.rv[t - 1],
            self.oc[t],
        );
        let w = gap_step(self.gamma, self.q, r_prev, self.w);
        self.q = q;
        self.w = w;
        self.t += 1;
        Some((t, q, w))
    }
}

pub(crate) fn check_window(series: &MarketSeries, window: &Range<usize>) -> Result<()> {
    if window.start == 0 {
        return Err(Error::InvalidArgument(
            "recursion windows start at index 1 or later (index 0 has no lagged data)".into(),
        ));
    }
    if window.end > series.len() || window.start > window.end {
        return Err(Error::InvalidArgument(format!(
            "window {}..{} outside series of length {}",
            window.start,
            window.end,
            series.len()
        )));
    }
    Ok(())
}

/// Runs the recursion over `window`. `init` is the state at `window.start - 1`.
pub fn run_path(
    spec: &ModelSpec,
    params: &ParamVector,
    series: &MarketSeries,
    init: &InitialState,
    window: Range<usize>,
) -> Result<RiskPath> {
    params.check_dim(spec.variant)?;
    check_window(series, &window)?;
    let n = window.len();
    let mut path = RiskPath {
        q: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        es: Vec::with_capacity(n),
    };
    for (t, q, w) in Recursion::new(spec.variant, params, series, init, window) {
        let es = q - w;
        if !(q.is_finite() && w.is_finite() && es.is_finite()) {
            return Err(Error::NonFinite { index: t });
        }
        path.q.push(q);
        path.w.push(w);
        path.es.push(es);
    }
    Ok(path)
}
