//! Jobs (NSW) and STAR conversion pipelines.
//!
//! NSW input: a CSV with columns `treat, age, education, black, hispanic,
//! married, nodegree, re74, re75, re78`. Earnings are log1p-transformed.
//!
//! STAR input: the longitudinal layout with per-grade columns suffixed `k`,
//! `1`, `2`, `3`: `star*` (class type: `small`, `regular`, `regular+aide`),
//! `read*`, `math*`, `lunch*`, `school*`, `degree*`, `ladder*`,
//! `experience*`, `tethnicity*`, plus `gender`, `ethnicity`, `birth`
//! (`"1979 Q3"` or a fractional year). Categorical strings map to fixed codes
//! (see [`star_codes`]); numeric strings are accepted as codes directly.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rct2iv::fixtures::{NSW_HIDDEN, NSW_OBSERVED};
use crate::rct2iv::{balance_arms, convert, encode, Conversion, ConversionConfig, PropensitySpec, RctTable, Term};
use crate::rng::derive_seed;

fn lin(col: &str, coef: f64) -> Term {
    Term::Linear { col: col.into(), coef }
}

fn sq(col: &str, coef: f64) -> Term {
    Term::Square { col: col.into(), coef }
}

fn prod(a: &str, b: &str, coef: f64) -> Term {
    Term::Product {
        a: a.into(),
        b: b.into(),
        coef,
    }
}

fn tanh(weights: &[(&str, f64)], coef: f64) -> Term {
    Term::TanhLinear {
        weights: weights.iter().map(|(c, w)| (c.to_string(), *w)).collect(),
        coef,
    }
}

pub fn jobs_config(beta: f64, seed: u64) -> ConversionConfig {
    ConversionConfig {
        observed_cols: NSW_OBSERVED.iter().map(|s| s.to_string()).collect(),
        hidden_cols: NSW_HIDDEN.iter().map(|s| s.to_string()).collect(),
        pz: PropensitySpec {
            terms: vec![
                lin("age", 0.4),
                lin("education", -0.3),
                sq("age", 0.25),
                prod("black", "married", 0.3),
                tanh(&[("education", 1.0), ("age", -0.5)], 0.5),
            ],
            intercept: None,
        },
        pz_clip: (0.05, 0.95),
        pt: PropensitySpec {
            terms: vec![
                lin("re74", 0.8),
                lin("re75", 0.6),
                prod("re74", "re75", -0.2),
                lin("education", 0.2),
                tanh(&[("age", 1.0), ("nodegree", 0.5)], 0.4),
            ],
            intercept: None,
        },
        pt_clip: (0.01, 0.99),
        beta,
        target_z: 0.5,
        target_t: 0.5,
        seed,
    }
}

/// Reads an NSW-layout CSV and applies log1p to `re74`, `re75` and `re78`.
pub fn read_jobs_table(path: &Path) -> Result<RctTable> {
    let covs: Vec<&str> = NSW_OBSERVED.iter().chain(&NSW_HIDDEN).copied().collect();
    let mut table = RctTable::read_csv(path, &covs, "treat", "re78")?;
    let hidden: Vec<usize> = table.require_columns(&NSW_HIDDEN)?;
    for row in &mut table.x {
        for &j in &hidden {
            row[j] = log1p_earnings(row[j])?;
        }
    }
    for y in &mut table.y {
        *y = log1p_earnings(*y)?;
    }
    Ok(table)
}

fn log1p_earnings(v: f64) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::Data(format!("negative earnings {v}")));
    }
    Ok(v.ln_1p())
}

/// Balances arms of an already transformed table and converts it.
pub fn jobs_from_table(table: &RctTable, beta: f64, seed: u64) -> Result<Conversion> {
    let (balanced, _) = balance_arms(table, derive_seed(seed, "jobs", 0, "balance"))?;
    convert(&balanced, &jobs_config(beta, derive_seed(seed, "jobs", 0, "convert")))
}

pub fn jobs_pipeline(path: &Path, beta: f64, seed: u64) -> Result<Conversion> {
    jobs_from_table(&read_jobs_table(path)?, beta, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StarContrast {
    SmallVsRegular,
    AideVsRegular,
}

impl StarContrast {
    fn treated_code(self) -> &'static str {
        match self {
            Self::SmallVsRegular => "small",
            Self::AideVsRegular => "regular+aide",
        }
    }
}

impl std::str::FromStr for StarContrast {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small-vs-regular" => Ok(Self::SmallVsRegular),
            "aide-vs-regular" => Ok(Self::AideVsRegular),
            other => Err(Error::Config(format!("unknown STAR contrast '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StarOutcome {
    Math,
    Reading,
}

impl std::str::FromStr for StarOutcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "math" => Ok(Self::Math),
            "reading" | "read" => Ok(Self::Reading),
            other => Err(Error::Config(format!("unknown STAR outcome '{other}'"))),
        }
    }
}

pub const STAR_OBSERVED: [&str; 6] = [
    "gender",
    "birth_quarter",
    "ethnicity",
    "entry_grade",
    "tdegree",
    "tladder",
];
pub const STAR_HIDDEN: [&str; 4] = ["school", "lunch", "tethnicity", "texperience"];
const GRADES: [&str; 4] = ["k", "1", "2", "3"];

/// Fixed integer codes for the STAR categorical columns.
pub fn star_codes() -> HashMap<&'static str, HashMap<&'static str, f64>> {
    let m = |pairs: &[(&'static str, f64)]| pairs.iter().copied().collect::<HashMap<_, _>>();
    HashMap::from([
        ("gender", m(&[("male", 0.0), ("female", 1.0)])),
        (
            "ethnicity",
            m(&[
                ("cauc", 0.0),
                ("afam", 1.0),
                ("asian", 2.0),
                ("hispanic", 3.0),
                ("amindian", 4.0),
                ("other", 5.0),
            ]),
        ),
        (
            "degree",
            m(&[
                ("bachelor", 0.0),
                ("master", 1.0),
                ("specialist", 2.0),
                ("phd", 3.0),
                ("master+", 2.0),
            ]),
        ),
        (
            "ladder",
            m(&[
                ("notladder", 0.0),
                ("probation", 1.0),
                ("apprentice", 2.0),
                ("level1", 3.0),
                ("level2", 4.0),
                ("level3", 5.0),
            ]),
        ),
        (
            "school",
            m(&[("inner-city", 0.0), ("suburban", 1.0), ("rural", 2.0), ("urban", 3.0)]),
        ),
        ("lunch", m(&[("non-free", 0.0), ("free", 1.0)])),
        ("tethnicity", m(&[("cauc", 0.0), ("afam", 1.0), ("asian", 2.0)])),
    ])
}

fn birth_quarter(raw: &str) -> Option<f64> {
    let s = raw.trim();
    if let Some(pos) = s.find('Q') {
        return s[pos + 1..]
            .trim()
            .parse::<f64>()
            .ok()
            .filter(|q| (1.0..=4.0).contains(q));
    }
    let year: f64 = s.parse().ok()?;
    Some((year.fract() * 4.0).round() + 1.0)
}

fn is_missing(s: &str) -> bool {
    let s = s.trim();
    s.is_empty() || s.eq_ignore_ascii_case("na")
}

/// An entry-grade snapshot of one STAR contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct StarSnapshot {
    /// Standardized within entry grade.
    pub table: RctTable,
    /// Entry grade index (0 = kindergarten) per row.
    pub grade: Vec<u8>,
    pub rows_read: usize,
}

pub fn star_snapshot(path: &Path, contrast: StarContrast, outcome: StarOutcome) -> Result<StarSnapshot> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |n: &str| headers.iter().position(|h| h.trim() == n);
    let score_prefix = match outcome {
        StarOutcome::Math => "math",
        StarOutcome::Reading => "read",
    };
    let mut required: Vec<String> = vec!["gender".into(), "ethnicity".into(), "birth".into()];
    for prefix in [
        "star",
        score_prefix,
        "lunch",
        "school",
        "degree",
        "ladder",
        "experience",
        "tethnicity",
    ] {
        for g in GRADES {
            required.push(format!("{prefix}{g}"));
        }
    }
    let missing: Vec<String> = required.iter().filter(|n| col(n).is_none()).cloned().collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let ix = |n: &str| col(n).expect("checked");
    let codes = star_codes();
    let code = |kind: &str, v: &str| encode(&codes[kind], v);

    let (mut x, mut t, mut y, mut grade) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut rows_read = 0;
    for rec in rdr.records() {
        let rec = rec?;
        rows_read += 1;
        let Some(g) = GRADES.iter().position(|g| !is_missing(&rec[ix(&format!("star{g}"))])) else {
            continue;
        };
        let gs = GRADES[g];
        let class = rec[ix(&format!("star{gs}"))].trim().to_ascii_lowercase();
        let arm = if class == contrast.treated_code() {
            1
        } else if class == "regular" {
            0
        } else {
            continue;
        };
        let field = |p: &str| rec[ix(&format!("{p}{gs}"))].to_string();
        let score = field(score_prefix);
        if is_missing(&score) {
            continue;
        }
        let values = (|| {
            Some(vec![
                code("gender", &rec[ix("gender")])?,
                birth_quarter(&rec[ix("birth")])?,
                code("ethnicity", &rec[ix("ethnicity")])?,
                g as f64,
                code("degree", &field("degree"))?,
                code("ladder", &field("ladder"))?,
                code("school", &field("school"))?,
                code("lunch", &field("lunch"))?,
                code("tethnicity", &field("tethnicity"))?,
                field("experience").trim().parse::<f64>().ok()?,
            ])
        })();
        let (Some(values), Ok(score)) = (values, score.trim().parse::<f64>()) else {
            continue;
        };
        x.push(values);
        t.push(arm);
        y.push(score);
        grade.push(g as u8);
    }
    for (arm, name) in [(1u8, contrast.treated_code()), (0u8, "regular")] {
        if !t.contains(&arm) {
            return Err(Error::Data(format!("contrast arm '{name}' is empty")));
        }
    }
    standardize_within_groups(&mut y, &grade);
    let columns = STAR_OBSERVED
        .iter()
        .chain(&STAR_HIDDEN)
        .map(|s| s.to_string())
        .collect();
    Ok(StarSnapshot {
        table: RctTable::new(columns, x, t, y)?,
        grade,
        rows_read,
    })
}

/// `(y − μ_g)/σ_g` per group, sample sd; singleton groups map to 0.
pub fn standardize_within_groups(y: &mut [f64], group: &[u8]) {
    let mut stats: HashMap<u8, (f64, f64, usize)> = HashMap::new();
    for (&v, &g) in y.iter().zip(group) {
        let e = stats.entry(g).or_default();
        e.0 += v;
        e.2 += 1;
    }
    for e in stats.values_mut() {
        e.0 /= e.2 as f64;
    }
    for (&v, &g) in y.iter().zip(group) {
        let e = stats.get_mut(&g).unwrap();
        e.1 += (v - e.0).powi(2);
    }
    for (v, g) in y.iter_mut().zip(group) {
        let (m, ss, n) = stats[g];
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        *v = if sd > 0.0 { (*v - m) / sd } else { 0.0 };
    }
}

pub fn star_config(beta: f64, seed: u64) -> ConversionConfig {
    ConversionConfig {
        observed_cols: STAR_OBSERVED.iter().map(|s| s.to_string()).collect(),
        hidden_cols: STAR_HIDDEN.iter().map(|s| s.to_string()).collect(),
        pz: PropensitySpec {
            terms: vec![
                lin("gender", 0.3),
                lin("ethnicity", 0.3),
                sq("birth_quarter", 0.2),
                prod("tdegree", "entry_grade", 0.3),
                tanh(&[("tladder", 1.0), ("gender", 0.5)], 0.5),
            ],
            intercept: None,
        },
        pz_clip: (0.05, 0.95),
        pt: PropensitySpec {
            terms: vec![
                lin("lunch", 0.7),
                lin("school", 0.5),
                lin("texperience", 0.4),
                lin("tethnicity", 0.3),
                lin("gender", 0.2),
            ],
            intercept: None,
        },
        pt_clip: (0.01, 0.99),
        beta,
        target_z: 0.5,
        target_t: 0.5,
        seed,
    }
}

pub fn star_pipeline(
    path: &Path,
    contrast: StarContrast,
    outcome: StarOutcome,
    beta: f64,
    seed: u64,
) -> Result<Conversion> {
    let snap = star_snapshot(path, contrast, outcome)?;
    let (balanced, _) = balance_arms(&snap.table, derive_seed(seed, "star", 0, "balance"))?;
    convert(&balanced, &star_config(beta, derive_seed(seed, "star", 0, "convert")))
}
