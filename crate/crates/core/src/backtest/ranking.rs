use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance under which two VRate distances count as equal, so
/// that e.g. 0.9% and 1.1% are equidistant from 1%.
const VRATE_TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriterionKind {
    /// Closer to `alpha` is better; equidistant rates favour the lower one.
    VRate { alpha: f64 },
    SmallerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub kind: CriterionKind,
    /// One value per model.
    pub values: Vec<f64>,
}

fn better(kind: CriterionKind, a: f64, b: f64) -> bool {
    match kind {
        CriterionKind::SmallerIsBetter => a < b,
        CriterionKind::VRate { alpha } => {
            let (da, db) = ((a - alpha).abs(), (b - alpha).abs());
            if (da - db).abs() <= VRATE_TIE_TOL * da.max(db).max(alpha) {
                a < b
            } else {
                da < db
            }
        }
    }
}

/// Competition ranks (1 = best; tied models share a rank and the following
/// rank is skipped).
pub fn rank_criterion(kind: CriterionKind, values: &[f64]) -> Result<Vec<usize>> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index: i });
    }
    Ok(values
        .iter()
        .map(|&v| 1 + values.iter().filter(|&&w| better(kind, w, v)).count())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub models: Vec<String>,
    pub criteria: Vec<String>,
    /// `ranks[c][j]`: rank of model `j` on criterion `c`.
    pub ranks: Vec<Vec<usize>>,
    /// Per-model rank sums.
    pub sums: Vec<usize>,
}

pub fn rank_models(models: &[String], criteria: &[Criterion]) -> Result<RankTable> {
    if models.is_empty() {
        return Err(Error::Empty);
    }
    let mut ranks = Vec::with_capacity(criteria.len());
    for c in criteria {
        if c.values.len() != models.len() {
            return Err(Error::InvalidArgument(format!(
                "criterion {} has {} values for {} models",
                c.name,
                c.values.len(),
                models.len()
            )));
        }
        ranks.push(rank_criterion(c.kind, &c.values)?);
    }
    let sums = (0..models.len())
        .map(|j| ranks.iter().map(|r: &Vec<usize>| r[j]).sum())
        .collect();
    Ok(RankTable {
        models: models.to_vec(),
        criteria: criteria.iter().map(|c| c.name.clone()).collect(),
        ranks,
        sums,
    })
}

/// Sum of per-market rank sums; tables must list models in the same order.
pub fn total_ranks(tables: &[RankTable]) -> Result<Vec<usize>> {
    let Some(first) = tables.first() else {
        return Err(Error::Empty);
    };
    if tables.iter().any(|t| t.models != first.models) {
        return Err(Error::InvalidArgument("tables rank different model sets".into()));
    }
    Ok((0..first.models.len())
        .map(|j| tables.iter().map(|t| t.sums[j]).sum())
        .collect())
}

/// Writes `market,rule,<model...>` rows: one per criterion, a `Sum` row per
/// market and a final `Total` row.
pub fn write_rank_csv<W: Write>(tables: &[(String, RankTable)], writer: W) -> Result<()> {
    let Some((_, first)) = tables.first() else {
        return Err(Error::Empty);
    };
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["market".to_string(), "rule".to_string()];
    header.extend(first.models.iter().cloned());
    w.write_record(&header)?;
    for (market, t) in tables {
        for (name, r) in t.criteria.iter().zip(&t.ranks) {
            let mut row = vec![market.clone(), name.clone()];
            row.extend(r.iter().map(|x| x.to_string()));
            w.write_record(&row)?;
        }
        let mut row = vec![market.clone(), "Sum".to_string()];
        row.extend(t.sums.iter().map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    let owned: Vec<RankTable> = tables.iter().map(|(_, t)| t.clone()).collect();
    let mut row = vec!["Total".to_string(), String::new()];
    row.extend(total_ranks(&owned)?.iter().map(|x| x.to_string()));
    w.write_record(&row)?;
    w.flush().map_err(|e| Error::io("<rank writer>", e))?;
    Ok(())
}

/// One model's evaluation results in one market, as read from or written to
/// a criteria CSV. Rates are fractions, not percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaRow {
    pub market: String,
    pub model: String,
    pub alpha: f64,
    pub vrate: f64,
    pub es_measure: f64,
    pub quantile_score: f64,
    pub al_log_score: f64,
    /// Rejections among the UC, CC and DQ tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage_rejections: Option<f64>,
    /// Rejection count from ESR regression backtests run elsewhere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esr_rejections: Option<f64>,
}

const REQUIRED_CRITERIA: [&str; 7] = [
    "market",
    "model",
    "alpha",
    "vrate",
    "es_measure",
    "quantile_score",
    "al_log_score",
];

pub fn read_criteria_csv<R: Read>(reader: R) -> Result<Vec<CriteriaRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if let Some(missing) = REQUIRED_CRITERIA.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(Error::MissingColumn(missing.to_string()));
    }
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

pub fn write_criteria_csv<W: Write>(rows: &[CriteriaRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<criteria writer>", e))?;
    Ok(())
}

impl CriteriaRow {
    /// Groups rows by market (in first-appearance order) and ranks each
    /// market. Optional columns become criteria only when every row has them.
    pub fn rank_markets(rows: &[CriteriaRow]) -> Result<Vec<(String, RankTable)>> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<&CriteriaRow>> = BTreeMap::new();
        for r in rows {
            if !groups.contains_key(&r.market) {
                order.push(r.market.clone());
            }
            groups.entry(r.market.clone()).or_default().push(r);
        }
        let with_cov = rows.iter().all(|r| r.coverage_rejections.is_some());
        let with_esr = rows.iter().all(|r| r.esr_rejections.is_some());
        let mut out = Vec::new();
        for market in order {
            let g = &groups[&market];
            let alpha = g[0].alpha;
            if g.iter().any(|r| r.alpha != alpha) {
                return Err(Error::InvalidArgument(format!("market {market} mixes alpha levels")));
            }
            let col = |f: &dyn Fn(&CriteriaRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let small = CriterionKind::SmallerIsBetter;
            let mut criteria = vec![
                Criterion { name: "VRate".into(), kind: CriterionKind::VRate { alpha }, values: col(&|r| r.vrate) },
                Criterion { name: "ES method".into(), kind: small, values: col(&|r| r.es_measure) },
                Criterion { name: "Quantile score".into(), kind: small, values: col(&|r| r.quantile_score) },
                Criterion { name: "AL log score".into(), kind: small, values: col(&|r| r.al_log_score) },
            ];
            if with_cov {
                criteria.push(Criterion {
                    name: "Coverage backtests".into(),
                    kind: small,
                    values: col(&|r| r.coverage_rejections.unwrap_or(0.0)),
                });
            }
            if with_esr {
                criteria.push(Criterion {
                    name: "ESR backtest".into(),
                    kind: small,
                    values: col(&|r| r.esr_rejections.unwrap_or(0.0)),
                });
            }
            let models: Vec<String> = g.iter().map(|r| r.model.clone()).collect();
            out.push((market, rank_models(&models, &criteria)?));
        }
        Ok(out)
    }
}
