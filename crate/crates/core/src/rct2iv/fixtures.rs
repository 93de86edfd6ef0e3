//! Synthetic trial tables with known potential outcomes.
//!
//! [`NswAnalog`] mimics the NSW job-training table (same columns, earnings with
//! a zero mass, pre-program earnings driven by a latent ability that also
//! drives the outcome). [`StarAnalog`] writes a STAR-shaped longitudinal table
//! with per-grade columns. [`synthetic_rct`] is a small generic trial with
//! heterogeneous effects.

use std::path::Path;

use rand::Rng;

use crate::error::Result;
use crate::rct2iv::RctTable;
use crate::rng::{stream, StreamRng};
use crate::sampling::{sigmoid, standard_normal};

/// An RCT together with both potential outcomes of every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownRct {
    pub table: RctTable,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl KnownRct {
    pub fn effects(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    pub fn select(&self, rows: &[usize]) -> KnownRct {
        KnownRct {
            table: self.table.select(rows),
            y0: rows.iter().map(|&i| self.y0[i]).collect(),
            y1: rows.iter().map(|&i| self.y1[i]).collect(),
        }
    }
}

/// Columns `o1, o2` (observed) and `u1` (hidden); effect `1 + 0.5·o1 + u1`
/// and a treated share of `p_treat`.
pub fn synthetic_rct(n: usize, p_treat: f64, seed: u64) -> KnownRct {
    let mut rng = stream(seed, "fixtures/synthetic-rct");
    let (mut x, mut t, mut y, mut y0s, mut y1s) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let o1 = standard_normal(&mut rng);
        let o2 = f64::from(u8::from(rng.random_bool(0.4)));
        let u1 = standard_normal(&mut rng);
        let noise = 0.5 * standard_normal(&mut rng);
        let y0 = 0.5 * o1 - 0.3 * o2 + u1 + noise;
        let y1 = y0 + 1.0 + 0.5 * o1 + u1;
        let ti = u8::from(rng.random_bool(p_treat));
        x.push(vec![o1, o2, u1]);
        t.push(ti);
        y.push(if ti == 1 { y1 } else { y0 });
        y0s.push(y0);
        y1s.push(y1);
    }
    KnownRct {
        table: RctTable::new(vec!["o1".into(), "o2".into(), "u1".into()], x, t, y).expect("consistent shapes"),
        y0: y0s,
        y1: y1s,
    }
}

/// NSW-shaped generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NswAnalog {
    pub p_treat: f64,
}

impl Default for NswAnalog {
    fn default() -> Self {
        Self { p_treat: 185.0 / 445.0 }
    }
}

/// Observed demographics of one unit: age, education, black, hispanic, married, nodegree.
pub type NswObserved = [f64; 6];

/// Hidden and outcome draws of one unit on the log scale:
/// `(log1p re74, log1p re75, log1p re78(0), log1p re78(1))`.
pub type NswLatent = (f64, f64, f64, f64);

pub const NSW_OBSERVED: [&str; 6] = ["age", "education", "black", "hispanic", "married", "nodegree"];
pub const NSW_HIDDEN: [&str; 2] = ["re74", "re75"];

impl NswAnalog {
    pub fn draw_observed(&self, rng: &mut StreamRng) -> NswObserved {
        let age = (17.0 + 38.0 * rng.random::<f64>().powi(2)).round();
        let education = (10.3 + 2.0 * standard_normal(rng)).round().clamp(3.0, 16.0);
        let black = f64::from(u8::from(rng.random_bool(0.8)));
        let hispanic = if black == 1.0 {
            0.0
        } else {
            f64::from(u8::from(rng.random_bool(0.5)))
        };
        let married = f64::from(u8::from(rng.random_bool(0.17)));
        let nodegree = f64::from(u8::from(education < 12.0));
        [age, education, black, hispanic, married, nodegree]
    }

    /// Draws the latent ability, pre-program earnings and both potential outcomes
    /// given the observed demographics. Ability is independent of them.
    pub fn draw_latent(&self, o: &NswObserved, rng: &mut StreamRng) -> NswLatent {
        let [age, edu, _black, _hisp, married, nodegree] = *o;
        let ability = standard_normal(rng);
        let base = 7.6 + 0.12 * (edu - 10.0) + 0.015 * (age - 25.0) + 0.7 * ability;
        let l74 = if rng.random_bool(sigmoid(0.2 - 0.9 * ability)) {
            0.0
        } else {
            (base + 0.7 * standard_normal(rng)).max(0.0)
        };
        let l75 = if rng.random_bool(sigmoid(0.4 - 0.9 * ability - 0.5 * f64::from(u8::from(l74 > 0.0)))) {
            0.0
        } else {
            (base + 0.2 + 0.7 * standard_normal(rng)).max(0.0)
        };
        let zero_u: f64 = rng.random();
        let noise = 0.8 * standard_normal(rng);
        let level = 8.2 + 0.1 * (edu - 10.0) + 0.6 * ability - 0.2 * nodegree;
        let y = |t: f64| {
            if zero_u < sigmoid(-0.9 - 0.8 * ability - 0.4 * t) {
                0.0
            } else {
                (level + t * (0.35 + 0.2 * married + 0.1 * ability) + noise).max(0.0)
            }
        };
        (l74, l75, y(0.0), y(1.0))
    }

    /// A table on the raw (dollar) scale; potential outcomes are `re78` in dollars.
    pub fn sample(&self, n: usize, seed: u64) -> KnownRct {
        let mut rng = stream(seed, "fixtures/nsw");
        let (mut x, mut t, mut y, mut y0s, mut y1s) = (vec![], vec![], vec![], vec![], vec![]);
        for _ in 0..n {
            let o = self.draw_observed(&mut rng);
            let (l74, l75, ly0, ly1) = self.draw_latent(&o, &mut rng);
            let ti = u8::from(rng.random_bool(self.p_treat));
            let (y0, y1) = (ly0.exp_m1(), ly1.exp_m1());
            let mut row = o.to_vec();
            row.push(l74.exp_m1());
            row.push(l75.exp_m1());
            x.push(row);
            t.push(ti);
            y.push(if ti == 1 { y1 } else { y0 });
            y0s.push(y0);
            y1s.push(y1);
        }
        let columns = NSW_OBSERVED.iter().chain(&NSW_HIDDEN).map(|s| s.to_string()).collect();
        KnownRct {
            table: RctTable::new(columns, x, t, y).expect("consistent shapes"),
            y0: y0s,
            y1: y1s,
        }
    }
}

/// Writes the NSW column layout: `treat, age, education, black, hispanic, married, nodegree, re74, re75, re78`.
pub fn write_nsw_csv(rct: &KnownRct, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "treat",
        "age",
        "education",
        "black",
        "hispanic",
        "married",
        "nodegree",
        "re74",
        "re75",
        "re78",
    ])?;
    for i in 0..rct.table.n() {
        let mut rec = vec![rct.table.t[i].to_string()];
        rec.extend(rct.table.x[i].iter().map(|v| format!("{v:?}")));
        rec.push(format!("{:?}", rct.table.y[i]));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const STAR_GRADES: [&str; 4] = ["k", "1", "2", "3"];

/// STAR-shaped generator writing per-grade class type, score and teacher columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarAnalog {
    /// Effect of a small class in student-level score sd.
    pub small_effect: f64,
    pub aide_effect: f64,
}

impl Default for StarAnalog {
    fn default() -> Self {
        Self {
            small_effect: 0.2,
            aide_effect: 0.05,
        }
    }
}

impl StarAnalog {
    pub fn write_csv(&self, n: usize, seed: u64, path: &Path) -> Result<()> {
        let mut rng = stream(seed, "fixtures/star");
        let mut header = vec!["gender".to_string(), "ethnicity".into(), "birth".into()];
        for prefix in [
            "star",
            "read",
            "math",
            "lunch",
            "school",
            "degree",
            "ladder",
            "experience",
            "tethnicity",
        ] {
            for g in STAR_GRADES {
                header.push(format!("{prefix}{g}"));
            }
        }
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&header)?;
        let pick = |rng: &mut StreamRng, xs: &[&'static str]| xs[rng.random_range(0..xs.len())];
        for _ in 0..n {
            let gender = pick(&mut rng, &["male", "female"]);
            let ethnicity = if rng.random_bool(0.65) {
                "cauc"
            } else {
                pick(&mut rng, &["afam", "asian", "hispanic"])
            };
            let birth = format!("{} Q{}", rng.random_range(1977..=1981), rng.random_range(1..=4));
            let entry = [0.6, 0.8, 0.92, 1.0]
                .iter()
                .position(|&c| rng.random::<f64>() < c)
                .unwrap_or(3);
            let class = pick(&mut rng, &["small", "regular", "regular+aide"]);
            let school = pick(&mut rng, &["inner-city", "suburban", "rural", "urban"]);
            let ses = standard_normal(&mut rng);
            let lunch = if rng.random_bool(sigmoid(-0.3 - 1.2 * ses)) {
                "free"
            } else {
                "non-free"
            };
            let mut grade_cols: Vec<Vec<String>> = vec![Vec::new(); 9];
            for (gi, _) in STAR_GRADES.iter().enumerate() {
                if gi < entry {
                    grade_cols.iter_mut().for_each(|c| c.push(String::new()));
                    continue;
                }
                let effect = match class {
                    "small" => self.small_effect,
                    "regular+aide" => self.aide_effect,
                    _ => 0.0,
                };
                let base = 430.0 + 25.0 * gi as f64;
                let sd = 35.0 + 3.0 * gi as f64;
                let score = |rng: &mut StreamRng| {
                    base + sd
                        * (effect + 0.4 * ses + if gender == "female" { 0.1 } else { 0.0 } + 0.8 * standard_normal(rng))
                };
                let missing = rng.random_bool(0.05);
                let read = if missing {
                    String::new()
                } else {
                    format!("{:.0}", score(&mut rng))
                };
                let math = if missing {
                    String::new()
                } else {
                    format!("{:.0}", score(&mut rng))
                };
                let degree = pick(&mut rng, &["bachelor", "master", "specialist"]);
                let ladder = pick(
                    &mut rng,
                    &["level1", "level2", "level3", "apprentice", "probation", "notladder"],
                );
                let exp = rng.random_range(0..30).to_string();
                let teth = if rng.random_bool(0.8) { "cauc" } else { "afam" };
                let vals = [
                    class.to_string(),
                    read,
                    math,
                    lunch.into(),
                    school.into(),
                    degree.into(),
                    ladder.into(),
                    exp,
                    teth.into(),
                ];
                for (c, v) in grade_cols.iter_mut().zip(vals) {
                    c.push(v);
                }
            }
            let mut rec = vec![gender.to_string(), ethnicity.to_string(), birth];
            for c in grade_cols {
                rec.extend(c);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
