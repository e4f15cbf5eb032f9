use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use nvsim_core::analysis::{fit_exponential, fit_lorentzian, fit_oscillation};
use nvsim_core::error::Error;
use nvsim_core::experiments::{
    fit_conditional_curve, records_to_csv, simulate_bath_preparation, simulate_cpt, simulate_entanglement_run,
    simulate_nuclear_cooling, simulate_ple, simulate_rabi, PhotonBasis,
};
use nvsim_core::levels::{build_excited_hamiltonian, eigensystem, transition_map, ExcitedBasis};
use nvsim_core::photonics::{
    collection_efficiency, purcell_from_cavity, purcell_from_lifetimes, zpl_enhancement, zpl_fraction_enhanced,
};
use nvsim_core::spectrum::csv_number;

use crate::config::{attribute, FitModel, FitParams, Format, Params, Resolved};

/// Why a run stopped.
#[derive(Debug)]
pub enum RunError {
    /// The inputs are unusable; reported as `key: reason`.
    Input { path: String, reason: String },
    /// A numerical method failed on valid inputs.
    Numerical(String),
}

/// Core errors before they are attributed to a parameter key.
enum Failure {
    Run(RunError),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure::Run(e)
    }
}

/// Data produced by one run, in both encodings, plus derived quantities for the meta file.
pub struct Artifacts {
    pub csv: String,
    pub json: Value,
    pub derived: Value,
}

impl Artifacts {
    pub fn data(&self, format: Format) -> String {
        match format {
            Format::Csv => self.csv.clone(),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).expect("results serialize");
                s.push('\n');
                s
            }
        }
    }
}

fn value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

fn quantity_csv(rows: &[(&str, f64)]) -> String {
    let mut s = String::from("quantity,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{}", csv_number(*v));
    }
    s
}

/// Runs the experiment. `base_dir` anchors relative input paths.
pub fn execute(cfg: &Resolved, base_dir: &Path) -> Result<Artifacts, RunError> {
    dispatch(cfg, base_dir).map_err(|f| match f {
        Failure::Run(e) => e,
        Failure::Core(e) if e.is_numerical() => RunError::Numerical(e.to_string()),
        Failure::Core(e) => {
            let c = attribute(&e, &cfg.parameters, None);
            RunError::Input { path: c.path, reason: c.reason }
        }
    })
}

fn dispatch(cfg: &Resolved, base_dir: &Path) -> Result<Artifacts, Failure> {
    let seed = cfg.seed.unwrap_or(0);
    match &cfg.params {
        Params::Levels(p) => {
            let levels = eigensystem(&build_excited_hamiltonian(&p.excited)?)?;
            let mut csv = String::from("index,energy_mhz,dominant");
            for b in ExcitedBasis::ALL {
                let _ = write!(csv, ",{}", b.label());
            }
            csv.push('\n');
            let mut rows = Vec::new();
            for i in 0..6 {
                let _ = write!(csv, "{i},{},{}", csv_number(levels.energies[i]), levels.dominant(i).label());
                for c in levels.characters[i] {
                    let _ = write!(csv, ",{}", csv_number(c));
                }
                csv.push('\n');
                rows.push(json!({
                    "index": i,
                    "energy_mhz": levels.energies[i],
                    "dominant": levels.dominant(i).label(),
                    "character": levels.characters[i],
                }));
            }
            let transitions = transition_map(&p.excited, &p.ground)?;
            let split =
                levels.energies[levels.index_of(ExcitedBasis::A2)] - levels.energies[levels.index_of(ExcitedBasis::A1)];
            Ok(Artifacts {
                csv,
                json: json!({ "levels": rows, "transitions": value(&transitions) }),
                derived: json!({ "a2_minus_a1_mhz": split }),
            })
        }
        Params::Ple { protocol, noise, model } => {
            let s = simulate_ple(&model.build()?, protocol, noise, seed)?;
            Ok(Artifacts { csv: s.to_csv(), json: value(&s), derived: Value::Null })
        }
        Params::Rabi { config, pulse, model } => {
            let h = simulate_rabi(&model.build()?, &pulse.drive(), config, seed)?;
            Ok(Artifacts { csv: h.to_csv(), json: value(&h), derived: Value::Null })
        }
        Params::Cpt { config, model } => {
            let s = simulate_cpt(&model.build()?, config, seed)?;
            Ok(Artifacts {
                csv: s.to_csv(),
                json: value(&s),
                derived: json!({ "eta": config.eta(), "linewidth_mhz": config.linewidth()? }),
            })
        }
        Params::Cool(c) => {
            let trace = simulate_nuclear_cooling(&nvsim_core::dynamics::NVModel::default(), c, seed)?;
            let mut csv = String::from("cycle,p_minus,p_zero,p_plus\n");
            for (n, p) in trace.cycles.iter().zip(&trace.populations) {
                let _ = writeln!(csv, "{n},{},{},{}", csv_number(p[0]), csv_number(p[1]), csv_number(p[2]));
            }
            Ok(Artifacts {
                csv,
                json: value(&trace),
                derived: json!({ "eta": c.cpt.eta(), "flip_flop_probability": c.flip_flop_probability() }),
            })
        }
        Params::Bath { config, model } => {
            let r = simulate_bath_preparation(config, &model.build()?, seed)?;
            let mut csv = String::from(
                "b_gauss,unconditioned_expected,unconditioned_sampled,conditioned_expected,conditioned_sampled\n",
            );
            for i in 0..config.b_ro.len() {
                let (u, c) = (&r.unconditioned, &r.conditioned);
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    csv_number(config.b_ro[i]),
                    csv_number(u.expected[i]),
                    u.sampled[i],
                    csv_number(c.expected[i]),
                    c.sampled[i]
                );
            }
            Ok(Artifacts {
                csv,
                json: value(&r),
                derived: json!({
                    "unconditioned_width_mhz": r.unconditioned_width,
                    "conditioned_width_mhz": r.conditioned_width,
                    "n_kept": r.n_kept,
                }),
            })
        }
        Params::Entangle(c) => {
            let run = simulate_entanglement_run(c, seed)?;
            let fits = if c.basis == PhotonBasis::Linear {
                let f = |k: usize| fit_conditional_curve(&run.curves.centers, &run.curves.sampled[k], c).ok();
                json!({ "h": value(&f(0)), "v": value(&f(1)) })
            } else {
                Value::Null
            };
            Ok(Artifacts { csv: records_to_csv(&run.records), json: value(&run), derived: json!({ "fits": fits }) })
        }
        Params::Purcell(p) => {
            let lp = purcell_from_lifetimes(p.tau0, p.tau)?;
            let rows = [
                ("purcell", lp.value),
                ("negative", if lp.negative { 1.0 } else { 0.0 }),
                ("zpl_enhancement", zpl_enhancement(lp.value.max(0.0), p.xi)?),
                ("zpl_fraction", zpl_fraction_enhanced(lp.value.max(0.0), p.xi)?),
                ("purcell_cavity", purcell_from_cavity(&p.cavity)?),
            ];
            let json = Value::Object(rows.iter().map(|(k, v)| (k.to_string(), json!(v))).collect());
            Ok(Artifacts { csv: quantity_csv(&rows), json, derived: Value::Null })
        }
        Params::Collect(g) => {
            let c = collection_efficiency(g)?;
            Ok(Artifacts {
                csv: quantity_csv(&[("collection_efficiency", c)]),
                json: json!({ "collection_efficiency": c }),
                derived: Value::Null,
            })
        }
        Params::Fit(f) => run_fit(f, base_dir),
    }
}

fn read_columns(f: &FitParams, base_dir: &Path) -> Result<(Vec<f64>, Vec<f64>), RunError> {
    let path = base_dir.join(&f.input);
    let text = std::fs::read_to_string(&path).map_err(|e| RunError::Input {
        path: "input".into(),
        reason: format!("cannot read {}: {e}", path.display()),
    })?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').map(str::trim).collect();
    let col = |key: &str, name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| RunError::Input {
            path: key.into(),
            reason: format!("column `{name}` not in header {header:?}"),
        })
    };
    let (ix, iy) = (col("x_column", &f.x_column)?, col("y_column", &f.y_column)?);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cells: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64, RunError> {
            cells.get(i).and_then(|c| c.trim().parse().ok()).ok_or_else(|| RunError::Input {
                path: "input".into(),
                reason: format!("line {}: column {i} is not a number", n + 2),
            })
        };
        xs.push(num(ix)?);
        ys.push(num(iy)?);
    }
    Ok((xs, ys))
}

fn run_fit(f: &FitParams, base_dir: &Path) -> Result<Artifacts, Failure> {
    let (x, y) = read_columns(f, base_dir)?;
    let (rows, converged): (Vec<(String, f64, f64)>, bool) = match f.model {
        FitModel::Lorentzian | FitModel::Exponential => {
            let r = if f.model == FitModel::Lorentzian {
                fit_lorentzian(&x, &y, f.n_peaks, None)?
            } else {
                fit_exponential(&x, &y, f.with_offset)?
            };
            let rows = r.params.iter().map(|(k, &v)| (k.clone(), v, r.uncertainty(k).unwrap_or(f64::NAN))).collect();
            (rows, r.converged)
        }
        FitModel::Oscillation => {
            let r = fit_oscillation(&x, &y, f.expected_frequency)?;
            let rows = vec![
                ("visibility".into(), r.visibility, r.visibility_err),
                ("frequency".into(), r.frequency, r.frequency_err),
                ("phase".into(), r.phase, r.phase_err),
            ];
            (rows, r.converged)
        }
    };
    if !converged {
        let summary: Vec<String> = rows.iter().map(|(k, v, _)| format!("{k}={v}")).collect();
        return Err(RunError::Numerical(format!("fit did not converge ({})", summary.join(", "))).into());
    }
    let mut csv = String::from("param,value,uncertainty\n");
    for (k, v, u) in &rows {
        let _ = writeln!(csv, "{k},{},{}", csv_number(*v), csv_number(*u));
    }
    let json =
        Value::Object(rows.iter().map(|(k, v, u)| (k.clone(), json!({ "value": v, "uncertainty": u }))).collect());
    Ok(Artifacts { csv, json, derived: json!({ "n_points": x.len() }) })
}
