//! Objective functions over molecules. Values are finite reals or `-inf`
//! for molecules that cannot be scored.

mod oracle;
mod substructure;

pub use oracle::{GammaPair, OracleClient, OracleSpec, ORACLE_CMD_ENV};
pub use substructure::{substructure_count, Substructure};

use crate::alphabet::Alphabet;
use crate::molecule::Molecule;
use crate::smiles;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("activity coefficient must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error("oracle unreachable: {0}")]
    OracleUnreachable(String),
    #[error("oracle did not answer within {0} ms")]
    OracleTimeout(u64),
    #[error("oracle protocol error: {0}")]
    Protocol(String),
    #[error("invalid objective: {0}")]
    Config(String),
}

impl ObjectiveError {
    /// True for failures of the external oracle rather than of the
    /// objective definition.
    pub fn is_oracle(&self) -> bool {
        matches!(
            self,
            ObjectiveError::OracleUnreachable(_)
                | ObjectiveError::OracleTimeout(_)
                | ObjectiveError::Protocol(_)
        )
    }
}

/// Scores a batch of molecules.
pub trait Objective: Send + Sync {
    fn evaluate(&self, molecules: &[Molecule]) -> Result<Vec<f64>, ObjectiveError>;
}

fn default_weight() -> f64 {
    1.0
}

fn default_temperature() -> f64 {
    298.0
}

fn default_iba() -> String {
    "CC(C)CO".into()
}

fn default_water() -> String {
    "O".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// 1 for an exact element-count match (implicit H included), else
    /// `1 / (1 + L1 distance)`.
    IsomerFormula { formula: String },
    /// Weighted count of occurrences of a pattern given as SMILES.
    SubstructureCount {
        pattern: String,
        #[serde(default)]
        min_hydrogens: Option<Vec<u32>>,
        #[serde(default = "default_weight")]
        weight: f64,
    },
    /// Number of atoms, capped at `target`.
    AtomCountTarget { target: usize },
    SolventIba {
        oracle: OracleSpec,
        #[serde(default = "default_temperature")]
        temperature: f64,
        #[serde(default = "default_iba")]
        solute: String,
        #[serde(default = "default_water")]
        water: String,
    },
    SolventTmb {
        oracle: OracleSpec,
        #[serde(default = "default_temperature")]
        temperature: f64,
        tmb: String,
        dmba: String,
        #[serde(default = "default_water")]
        water: String,
    },
    Composite { terms: Vec<WeightedTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTerm {
    pub weight: f64,
    pub objective: ObjectiveSpec,
}

/// Element counts from a formula such as `C4H10` or `CH4O`.
pub fn parse_formula(s: &str) -> Result<BTreeMap<String, u32>, ObjectiveError> {
    let bad = || ObjectiveError::Config(format!("malformed formula {s:?}"));
    let mut out = BTreeMap::new();
    let chars: Vec<char> = s.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_uppercase() {
            return Err(bad());
        }
        let mut sym = chars[i].to_string();
        i += 1;
        while i < chars.len() && chars[i].is_ascii_lowercase() {
            sym.push(chars[i]);
            i += 1;
        }
        let start = i;
        while i < chars.len() && chars[i].is_ascii_digit() {
            i += 1;
        }
        let n: u32 = if start == i {
            1
        } else {
            chars[start..i].iter().collect::<String>().parse().map_err(|_| bad())?
        };
        *out.entry(sym).or_insert(0) += n;
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn isomer_score(m: &Molecule, alphabet: &Alphabet, target: &BTreeMap<String, u32>) -> f64 {
    let have = m.formula(alphabet);
    let mut dist = 0u64;
    for (el, &n) in target {
        dist += (n as i64 - *have.get(el.as_str()).unwrap_or(&0) as i64).unsigned_abs();
    }
    for (el, &n) in &have {
        if !target.contains_key(*el) {
            dist += n as u64;
        }
    }
    1.0 / (1.0 + dist as f64)
}

pub fn atom_count_score(m: &Molecule, target: usize) -> f64 {
    m.len().min(target) as f64
}

fn check_gamma(g: &[f64]) -> Result<(), ObjectiveError> {
    match g.iter().find(|&&x| x.is_nan() || x <= 0.0) {
        Some(&x) => Err(ObjectiveError::NonPositiveGamma(x)),
        None => Ok(()),
    }
}

/// Miscibility-gap penalty, in (-20, 0].
pub fn miscibility_penalty(gamma_s_w: f64, gamma_w_s: f64) -> f64 {
    ((gamma_s_w * gamma_w_s - 4f64.exp()).tanh() - 1.0) * 10.0
}

pub fn solvent_iba_objective(
    gamma_iba_s: f64,
    gamma_s_w: f64,
    gamma_w_s: f64,
) -> Result<f64, ObjectiveError> {
    check_gamma(&[gamma_iba_s, gamma_s_w, gamma_w_s])?;
    Ok(1.0 / gamma_iba_s + miscibility_penalty(gamma_s_w, gamma_w_s))
}

pub fn solvent_tmb_objective(
    gamma_tmb_s: f64,
    gamma_dmba_s: f64,
    gamma_s_w: f64,
    gamma_w_s: f64,
) -> Result<f64, ObjectiveError> {
    check_gamma(&[gamma_tmb_s, gamma_dmba_s, gamma_s_w, gamma_w_s])?;
    Ok(gamma_tmb_s / gamma_dmba_s + miscibility_penalty(gamma_s_w, gamma_w_s))
}

struct Isomer {
    alphabet: Alphabet,
    target: BTreeMap<String, u32>,
}

impl Objective for Isomer {
    fn evaluate(&self, molecules: &[Molecule]) -> Result<Vec<f64>, ObjectiveError> {
        Ok(molecules
            .iter()
            .map(|m| isomer_score(m, &self.alphabet, &self.target))
            .collect())
    }
}

struct Count {
    alphabet: Alphabet,
    pattern: Substructure,
    weight: f64,
}

impl Objective for Count {
    fn evaluate(&self, molecules: &[Molecule]) -> Result<Vec<f64>, ObjectiveError> {
        Ok(molecules
            .iter()
            .map(|m| self.weight * substructure_count(m, &self.pattern, &self.alphabet) as f64)
            .collect())
    }
}

struct AtomCount(usize);

impl Objective for AtomCount {
    fn evaluate(&self, molecules: &[Molecule]) -> Result<Vec<f64>, ObjectiveError> {
        Ok(molecules.iter().map(|m| atom_count_score(m, self.0)).collect())
    }
}

enum SolventTask {
    Iba { solute: String },
    Tmb { tmb: String, dmba: String },
}

struct Solvent {
    alphabet: Alphabet,
    client: OracleClient,
    temperature: f64,
    water: String,
    task: SolventTask,
}

impl Solvent {
    fn pairs(&self, s: &str) -> Vec<GammaPair> {
        let t = self.temperature;
        let pair = |a: &str, b: &str| GammaPair::new(a, b, t);
        let mut out = match &self.task {
            SolventTask::Iba { solute } => vec![pair(solute, s)],
            SolventTask::Tmb { tmb, dmba } => vec![pair(tmb, s), pair(dmba, s)],
        };
        out.push(pair(s, &self.water));
        out.push(pair(&self.water, s));
        out
    }
}

impl Objective for Solvent {
    fn evaluate(&self, molecules: &[Molecule]) -> Result<Vec<f64>, ObjectiveError> {
        let per = match self.task {
            SolventTask::Iba { .. } => 3,
            SolventTask::Tmb { .. } => 4,
        };
        let pairs: Vec<GammaPair> = molecules
            .iter()
            .flat_map(|m| self.pairs(&smiles::write(m, &self.alphabet)))
            .collect();
        let ln = self.client.ln_gamma(&pairs)?;
        Ok(ln
            .chunks(per)
            .map(|chunk| {
                // a null from the oracle leaves the molecule unscorable
                let Some(g) = chunk.iter().map(|v| v.map(f64::exp)).collect::<Option<Vec<f64>>>()
                else {
                    return f64::NEG_INFINITY;
                };
                let v = match self.task {
                    SolventTask::Iba { .. } => solvent_iba_objective(g[0], g[1], g[2]),
                    SolventTask::Tmb { .. } => solvent_tmb_objective(g[0], g[1], g[2], g[3]),
                };
                v.unwrap_or(f64::NEG_INFINITY)
            })
            .collect())
    }
}

struct Composite(Vec<(f64, Box<dyn Objective>)>);

impl Objective for Composite {
    fn evaluate(&self, molecules: &[Molecule]) -> Result<Vec<f64>, ObjectiveError> {
        let mut total = vec![0.0; molecules.len()];
        for (w, f) in &self.0 {
            for (t, v) in total.iter_mut().zip(f.evaluate(molecules)?) {
                // any unscorable component makes the molecule unscorable
                *t = if v == f64::NEG_INFINITY || *t == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    *t + w * v
                };
            }
        }
        Ok(total)
    }
}

/// Instantiates an objective; solvent variants connect lazily on first use.
pub fn build_objective(
    spec: &ObjectiveSpec,
    alphabet: &Alphabet,
) -> Result<Box<dyn Objective>, ObjectiveError> {
    let finite = |w: f64| {
        if w.is_finite() {
            Ok(w)
        } else {
            Err(ObjectiveError::Config(format!("weight {w} is not finite")))
        }
    };
    let positive_t = |t: f64| {
        if t.is_finite() && t > 0.0 {
            Ok(t)
        } else {
            Err(ObjectiveError::Config(format!("temperature {t} K is not positive")))
        }
    };
    Ok(match spec {
        ObjectiveSpec::IsomerFormula { formula } => Box::new(Isomer {
            alphabet: alphabet.clone(),
            target: parse_formula(formula)?,
        }),
        ObjectiveSpec::SubstructureCount {
            pattern,
            min_hydrogens,
            weight,
        } => {
            let m = smiles::parse(pattern, alphabet)
                .map_err(|e| ObjectiveError::Config(format!("pattern {pattern:?}: {e}")))?;
            let mut p = Substructure::new(m)?;
            if let Some(h) = min_hydrogens {
                p = p.with_min_hydrogens(h.clone())?;
            }
            Box::new(Count {
                alphabet: alphabet.clone(),
                pattern: p,
                weight: finite(*weight)?,
            })
        }
        ObjectiveSpec::AtomCountTarget { target } => Box::new(AtomCount(*target)),
        ObjectiveSpec::SolventIba {
            oracle,
            temperature,
            solute,
            water,
        } => Box::new(Solvent {
            alphabet: alphabet.clone(),
            client: OracleClient::new(oracle.clone())?,
            temperature: positive_t(*temperature)?,
            water: water.clone(),
            task: SolventTask::Iba {
                solute: solute.clone(),
            },
        }),
        ObjectiveSpec::SolventTmb {
            oracle,
            temperature,
            tmb,
            dmba,
            water,
        } => Box::new(Solvent {
            alphabet: alphabet.clone(),
            client: OracleClient::new(oracle.clone())?,
            temperature: positive_t(*temperature)?,
            water: water.clone(),
            task: SolventTask::Tmb {
                tmb: tmb.clone(),
                dmba: dmba.clone(),
            },
        }),
        ObjectiveSpec::Composite { terms } => {
            if terms.is_empty() {
                return Err(ObjectiveError::Config("composite with no terms".into()));
            }
            Box::new(Composite(
                terms
                    .iter()
                    .map(|t| Ok((finite(t.weight)?, build_objective(&t.objective, alphabet)?)))
                    .collect::<Result<_, ObjectiveError>>()?,
            ))
        }
    })
}
