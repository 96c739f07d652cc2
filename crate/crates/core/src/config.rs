//! Configuration documents.
//!
//! Configs are JSON objects with this key schema (matrices are row-major
//! with explicit dimensions, `{"rows": r, "cols": c, "data": [...]}`):
//!
//! ```text
//! types[]    {A, B, Q, R, nu0}
//! mass[]     probability of each type
//! noise      {sigma_x, sigma_w, sigma_v}
//! scheduler  {S, alpha}
//! sim        {N, T, seed, runs}
//! solver     {tol, max_iter}
//! options    {allow_noiseless_channel, decoder_init}   (optional)
//! ```
//!
//! Unknown and missing keys are schema errors. The canonical form written
//! by [`to_canonical`] has sorted keys and every float printed with 17
//! significant digits, so `load -> to_canonical` is a fixed point.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{
    AgentTypeParams, DecoderInit, GameConfig, NoiseModel, Options, SchedulerParams, SimParams,
    SolverParams, TypeDistribution,
};
use crate::{Error, Matrix, Result, Vector};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct MatrixDoc {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixDoc {
    pub(crate) fn from_matrix(m: &Matrix) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            data.extend(m.row(i).iter());
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub(crate) fn to_matrix(&self, name: &str) -> Result<Matrix> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!(
                "{name}: {} entries for a {}x{} matrix",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeDoc {
    #[serde(rename = "A")]
    a: MatrixDoc,
    #[serde(rename = "B")]
    b: MatrixDoc,
    #[serde(rename = "Q")]
    q: MatrixDoc,
    #[serde(rename = "R")]
    r: MatrixDoc,
    nu0: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseDoc {
    sigma_x: MatrixDoc,
    sigma_w: MatrixDoc,
    sigma_v: MatrixDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchedulerDoc {
    #[serde(rename = "S")]
    s: MatrixDoc,
    alpha: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimDoc {
    #[serde(rename = "N")]
    agents: usize,
    #[serde(rename = "T")]
    horizon: usize,
    seed: u64,
    runs: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverDoc {
    tol: f64,
    max_iter: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptionsDoc {
    #[serde(default)]
    allow_noiseless_channel: bool,
    #[serde(default = "default_decoder_init")]
    decoder_init: String,
}

fn default_decoder_init() -> String {
    DecoderInit::PriorMean.as_str().to_string()
}

impl Default for OptionsDoc {
    fn default() -> Self {
        Self {
            allow_noiseless_channel: false,
            decoder_init: default_decoder_init(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    types: Vec<TypeDoc>,
    mass: Vec<f64>,
    noise: NoiseDoc,
    scheduler: SchedulerDoc,
    sim: SimDoc,
    solver: SolverDoc,
    #[serde(default)]
    options: OptionsDoc,
}

/// Parses and fully validates a configuration document.
pub fn load_config(text: &str) -> Result<GameConfig> {
    let doc: ConfigDoc = serde_json::from_str(text)?;
    let types = doc
        .types
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Ok(AgentTypeParams::new(
                t.a.to_matrix(&format!("types[{i}].A"))?,
                t.b.to_matrix(&format!("types[{i}].B"))?,
                t.q.to_matrix(&format!("types[{i}].Q"))?,
                t.r.to_matrix(&format!("types[{i}].R"))?,
                Vector::from_vec(t.nu0.clone()),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = GameConfig {
        distribution: TypeDistribution::new(types, doc.mass)?,
        noise: NoiseModel {
            sigma_x: doc.noise.sigma_x.to_matrix("noise.sigma_x")?,
            sigma_w: doc.noise.sigma_w.to_matrix("noise.sigma_w")?,
            sigma_v: doc.noise.sigma_v.to_matrix("noise.sigma_v")?,
        },
        scheduler: SchedulerParams {
            s: doc.scheduler.s.to_matrix("scheduler.S")?,
            alpha: doc.scheduler.alpha,
        },
        sim: SimParams {
            agents: doc.sim.agents,
            horizon: doc.sim.horizon,
            seed: doc.sim.seed,
            runs: doc.sim.runs,
        },
        solver: SolverParams {
            tol: doc.solver.tol,
            max_iter: doc.solver.max_iter,
        },
        options: Options {
            allow_noiseless_channel: doc.options.allow_noiseless_channel,
            decoder_init: doc.options.decoder_init.parse()?,
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config_file(path: impl AsRef<Path>) -> Result<GameConfig> {
    load_config(&std::fs::read_to_string(path)?)
}

/// Canonical text form of a config.
pub fn to_canonical(cfg: &GameConfig) -> String {
    let doc = ConfigDoc {
        types: cfg
            .distribution
            .types()
            .iter()
            .map(|t| TypeDoc {
                a: MatrixDoc::from_matrix(&t.a),
                b: MatrixDoc::from_matrix(&t.b),
                q: MatrixDoc::from_matrix(&t.q),
                r: MatrixDoc::from_matrix(&t.r),
                nu0: t.nu0.iter().copied().collect(),
            })
            .collect(),
        mass: cfg.distribution.mass().to_vec(),
        noise: NoiseDoc {
            sigma_x: MatrixDoc::from_matrix(&cfg.noise.sigma_x),
            sigma_w: MatrixDoc::from_matrix(&cfg.noise.sigma_w),
            sigma_v: MatrixDoc::from_matrix(&cfg.noise.sigma_v),
        },
        scheduler: SchedulerDoc {
            s: MatrixDoc::from_matrix(&cfg.scheduler.s),
            alpha: cfg.scheduler.alpha,
        },
        sim: SimDoc {
            agents: cfg.sim.agents,
            horizon: cfg.sim.horizon,
            seed: cfg.sim.seed,
            runs: cfg.sim.runs,
        },
        solver: SolverDoc {
            tol: cfg.solver.tol,
            max_iter: cfg.solver.max_iter,
        },
        options: OptionsDoc {
            allow_noiseless_channel: cfg.options.allow_noiseless_channel,
            decoder_init: cfg.options.decoder_init.as_str().to_string(),
        },
    };
    canonical_json(&serde_json::to_value(doc).expect("config documents are plain data"))
}

/// Formats a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Sorted-key, fixed-float JSON rendering of a value tree.
pub(crate) fn canonical_json(v: &Value) -> String {
    let mut out = String::new();
    write_value(v, 0, &mut out);
    out.push('\n');
    out
}

fn write_value(v: &Value, indent: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => {
            let _ = write!(out, "{b}");
        }
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else {
                out.push_str(&fmt_f64(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(items) => {
            if items.iter().all(|i| !i.is_array() && !i.is_object()) {
                out.push('[');
                for (j, item) in items.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    write_value(item, indent, out);
                }
                out.push(']');
            } else {
                out.push_str("[\n");
                for (j, item) in items.iter().enumerate() {
                    pad(indent + 2, out);
                    write_value(item, indent + 2, out);
                    out.push_str(if j + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(indent, out);
                out.push(']');
            }
        }
        Value::Object(map) => {
            // serde_json's default map is a BTreeMap, so iteration is sorted.
            out.push_str("{\n");
            let len = map.len();
            for (j, (k, item)) in map.iter().enumerate() {
                pad(indent + 2, out);
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(item, indent + 2, out);
                out.push_str(if j + 1 < len { ",\n" } else { "\n" });
            }
            pad(indent, out);
            out.push('}');
        }
    }
}

fn pad(n: usize, out: &mut String) {
    out.extend(std::iter::repeat_n(' ', n));
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL_A: &str = r#"{
        "types": [{"A": {"rows":1,"cols":1,"data":[0.5]},
                   "B": {"rows":1,"cols":1,"data":[1]},
                   "Q": {"rows":1,"cols":1,"data":[0.1]},
                   "R": {"rows":1,"cols":1,"data":[1]},
                   "nu0": [1.0]}],
        "mass": [1.0],
        "noise": {"sigma_x": {"rows":1,"cols":1,"data":[0.25]},
                  "sigma_w": {"rows":1,"cols":1,"data":[0.01]},
                  "sigma_v": {"rows":1,"cols":1,"data":[0.04]}},
        "scheduler": {"S": {"rows":1,"cols":1,"data":[1]}, "alpha": 2},
        "sim": {"N": 100, "T": 500, "seed": 1, "runs": 1},
        "solver": {"tol": 1e-10, "max_iter": 100000}
    }"#;

    #[test]
    fn loads_model_a() {
        let cfg = load_config(MODEL_A).unwrap();
        assert_eq!(cfg, GameConfig::model_a());
        assert_eq!((cfg.state_dim(), cfg.input_dim()), (1, 1));
    }

    #[test]
    fn canonical_form_is_a_fixed_point() {
        let cfg = load_config(MODEL_A).unwrap();
        let once = to_canonical(&cfg);
        let twice = to_canonical(&load_config(&once).unwrap());
        assert_eq!(once, twice);
        assert!(once.contains("\"alpha\": 2.0000000000000000e0"));
        assert!(once.contains("\"N\": 100"));
    }

    #[test]
    fn rejects_extra_and_missing_keys() {
        let extra = MODEL_A.replace("\"runs\": 1", "\"runs\": 1, \"bogus\": 3");
        assert!(matches!(load_config(&extra), Err(Error::Schema(_))));
        let missing = MODEL_A.replace("\"mass\": [1.0],", "");
        assert!(matches!(load_config(&missing), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_bad_masses() {
        let two = MODEL_A.replace(
            "\"nu0\": [1.0]}],",
            "\"nu0\": [1.0]}, {\"A\": {\"rows\":1,\"cols\":1,\"data\":[0.5]}, \
             \"B\": {\"rows\":1,\"cols\":1,\"data\":[1]}, \"Q\": {\"rows\":1,\"cols\":1,\"data\":[0.1]}, \
             \"R\": {\"rows\":1,\"cols\":1,\"data\":[1]}, \"nu0\": [1.0]}],",
        );
        let bad = two.replace("\"mass\": [1.0]", "\"mass\": [0.6, 0.5]");
        let err = load_config(&bad).unwrap_err();
        assert!(err.to_string().contains("masses must sum to 1"), "{err}");
        let good = two.replace("\"mass\": [1.0]", "\"mass\": [0.5, 0.5]");
        load_config(&good).unwrap();
    }

    #[test]
    fn zero_channel_noise_requires_flag() {
        let zero = MODEL_A.replace("\"data\":[0.04]", "\"data\":[0]");
        let err = load_config(&zero).unwrap_err();
        assert!(err.to_string().contains("covariance must be positive definite"));
        let flagged = zero.replace(
            "\"solver\": {\"tol\": 1e-10, \"max_iter\": 100000}",
            "\"solver\": {\"tol\": 1e-10, \"max_iter\": 100000}, \
             \"options\": {\"allow_noiseless_channel\": true}",
        );
        let cfg = load_config(&flagged).unwrap();
        assert!(cfg.options.allow_noiseless_channel);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let bad = MODEL_A.replace("\"data\":[0.25]", "\"data\":[0.25, 0.0]");
        assert!(matches!(load_config(&bad), Err(Error::Dimension(_))));
    }
}
