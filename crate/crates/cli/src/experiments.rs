//! The six experiment kinds. Each turns one validated config entry into
//! inequality records plus a metadata object for the JSON summary.

use rayon::prelude::*;
use serde_json::{json, Value};

use lr_fermi::bounds::{
    bound_polynomials, cor33_bound, cor33_calibration_check, cor33_constants, cor33_constants_with_horizon,
    ln_many_body_bound, ln_remainder_bound, measure_params, prop32_bound, rate_functions, InteractionModel,
};
use lr_fermi::fock::{mode_envelope, sigma_limit_error, Boundary, Lattice, ManyBodySystem, ModeVector, Region, TwoParticleGrid};
use lr_fermi::one_particle::{
    dyson_overlap, oracle_point_values, GaussianPacket, OracleSettings, PotentialModel, Probe, SimplexQuadrature,
    SpectralMeasure,
};
use lr_fermi::special::{bessel_k, bessel_k_upper_bound, d3_constant, nfold_conv_bound, nfold_conv_exp, DecayKernel};
use lr_fermi::Error;
use num_complex::Complex64;

use crate::config::{
    BoundsExperiment, CosineTerm, FockExperiment, InteractionSpec, OneParticleExperiment, OracleSpec,
    SigmaExperiment, SpecialExperiment, ThermoExperiment,
};
use crate::output::ResultRecord;
use crate::CliError;

pub struct Outcome {
    pub records: Vec<ResultRecord>,
    pub metadata: Value,
}

pub trait Experiment {
    /// Subcommand name, also the stem of the output files.
    const KIND: &'static str;
    fn name(&self) -> Option<&str>;
    fn run(&self, name: &str, seed: Option<u64>) -> Result<Outcome, CliError>;
}

/// Attach the experiment and check to a library error. Bad parameters
/// are configuration errors; everything else is a numerical failure.
fn fail(experiment: &str, what: String) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| match e {
        Error::Config(m) | Error::Domain(m) => CliError::Config(format!("experiment {experiment}, {what}: {m}")),
        Error::Numerical(m) => CliError::Numerical(format!("experiment {experiment}, {what}: {m}")),
    }
}

fn potential(terms: &[CosineTerm], experiment: &str) -> Result<PotentialModel, CliError> {
    if terms.is_empty() {
        return Ok(PotentialModel::free(1));
    }
    let pairs: Vec<(Vec<f64>, f64)> = terms.iter().map(|t| (t.wave_vector.clone(), t.amplitude)).collect();
    SpectralMeasure::cosine_series(1, &pairs)
        .map(PotentialModel::new)
        .map_err(fail(experiment, "potential".into()))
}

fn interaction(spec: &InteractionSpec, experiment: &str) -> Result<InteractionModel, CliError> {
    if spec.strength == 0.0 {
        return Ok(InteractionModel::zero(1));
    }
    InteractionModel::exponential(spec.strength, spec.rate, 1).map_err(fail(experiment, "interaction".into()))
}

fn oracle_settings(spec: &OracleSpec) -> OracleSettings {
    OracleSettings {
        max_spacing: spec.max_spacing,
        max_time_step: spec.max_time_step,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Least-squares slope of `ln(values)` against the given abscissae.
fn log_slope(xs: &[f64], values: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let num: f64 = xs.iter().zip(values).map(|(x, v)| (x - mx) * (v.ln() - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

impl Experiment for SpecialExperiment {
    const KIND: &'static str = "verify-special";

    fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn run(&self, name: &str, _seed: Option<u64>) -> Result<Outcome, CliError> {
        let d = self.dimension;
        let radii = linspace(0.0, self.radius_max, self.radius_points);
        let mut records = Vec::new();
        for &a in &self.rates {
            let kernel = DecayKernel::new(a, d).map_err(fail(name, format!("rate {a}")))?;
            if d == 1 {
                for &x in &radii {
                    let exact = (-a * x).exp() * (x + 1.0 / a);
                    let got = nfold_conv_exp(&kernel, 2, x).map_err(fail(name, format!("a={a} x={x}")))?;
                    records.push(
                        ResultRecord::new(name, "two_fold_closed_form", ((got - exact) / exact).abs(), self.closed_form_tolerance)
                            .real("a", a)
                            .real("x", x),
                    );
                }
            }
            for &n in &self.factors {
                let rows: Result<Vec<_>, CliError> = radii
                    .par_iter()
                    .map(|&x| {
                        let what = || format!("a={a} n={n} x={x}");
                        let value = nfold_conv_exp(&kernel, n, x).map_err(fail(name, what()))?;
                        let bound = nfold_conv_bound(&kernel, n, x).map_err(fail(name, what()))?;
                        Ok(ResultRecord::new(name, "nfold_convolution_bound", value, bound)
                            .real("a", a)
                            .int("n", n)
                            .real("x", x))
                    })
                    .collect();
                records.extend(rows?);
            }
        }
        for &eta in &self.bessel_orders {
            for i in 1..=self.bessel_points {
                let y = self.bessel_y_max * i as f64 / self.bessel_points as f64;
                let what = || format!("eta={eta} y={y}");
                let value = bessel_k(eta, y).map_err(fail(name, what()))?;
                let bound = bessel_k_upper_bound(eta, y).map_err(fail(name, what()))?;
                records.push(ResultRecord::new(name, "bessel_k_bound", value, bound).real("eta", eta).real("y", y));
            }
        }
        Ok(Outcome {
            records,
            metadata: json!({ "dimension": d, "d3": d3_constant(d) }),
        })
    }
}

impl Experiment for OneParticleExperiment {
    const KIND: &'static str = "one-particle";

    fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn run(&self, name: &str, seed: Option<u64>) -> Result<Outcome, CliError> {
        let seed = match (self.seed.or(seed), self.uses_monte_carlo()) {
            (Some(s), _) => s,
            (None, false) => SimplexQuadrature::default().seed,
            (None, true) => {
                return Err(CliError::Config(format!(
                    "experiment {name}: order {} uses Monte Carlo above order {}; a seed is required",
                    self.order, self.quadrature.max_gauss_order
                )))
            }
        };
        let quad = SimplexQuadrature {
            gauss_nodes: self.quadrature.gauss_nodes,
            max_gauss_order: self.quadrature.max_gauss_order,
            mc_strata: self.quadrature.mc_strata,
            seed,
        };
        let v = potential(&self.potential, name)?;
        let source = GaussianPacket::centered(1, self.sigma).map_err(fail(name, "source".into()))?;
        let settings = oracle_settings(&self.oracle);
        let mut records = Vec::new();
        for &t in &self.times {
            let oracle = oracle_point_values(&source, &v, t, &self.separations, &settings)
                .map_err(fail(name, format!("oracle at t={t}")))?;
            let rows: Result<Vec<_>, CliError> = self
                .separations
                .par_iter()
                .zip(oracle.par_iter())
                .map(|(&x, o)| {
                    let est = dyson_overlap(&source, &Probe::Point(vec![x]), &v, t, self.order, &quad)
                        .map_err(fail(name, format!("series at t={t} x={x}")))?;
                    let diff = (est.value - o.value).norm();
                    let budget = est.tail_bound + est.quadrature_error_estimate + o.error_estimate;
                    Ok(ResultRecord::new(name, "series_vs_oracle", diff, budget)
                        .budget(self.tolerance)
                        .real("t", t)
                        .real("x", x)
                        .int("order", self.order))
                })
                .collect();
            records.extend(rows?);
        }
        let m = measure_params(&v.measure);
        Ok(Outcome {
            records,
            metadata: json!({
                "sigma": self.sigma,
                "c_mu": m.c_mu,
                "m_max": m.m_max,
                "order": self.order,
                "quadrature": {
                    "gauss_nodes": quad.gauss_nodes,
                    "max_gauss_order": quad.max_gauss_order,
                    "mc_strata": quad.mc_strata,
                    "seed": quad.seed,
                    "max_enumerated_tuples": lr_fermi::one_particle::MAX_ENUMERATED_TUPLES,
                },
                "oracle": { "max_spacing": settings.max_spacing, "max_time_step": settings.max_time_step },
            }),
        })
    }
}

impl Experiment for BoundsExperiment {
    const KIND: &'static str = "bounds-check";

    fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn run(&self, name: &str, _seed: Option<u64>) -> Result<Outcome, CliError> {
        let v = potential(&self.potential, name)?;
        let m = measure_params(&v.measure);
        let k = cor33_constants_with_horizon(self.sigma, 1, m.c_mu, m.m_max, self.calibration_horizon)
            .map_err(fail(name, "constants".into()))?;
        let source = GaussianPacket::centered(1, self.sigma).map_err(fail(name, "source".into()))?;
        let settings = oracle_settings(&self.oracle);

        let mut records = vec![ResultRecord::new(
            name,
            "calibration",
            1.0,
            cor33_calibration_check(&k, self.calibration_points),
        )
        .int("points", self.calibration_points)];

        let per_time: Result<Vec<Vec<ResultRecord>>, CliError> = self
            .times
            .par_iter()
            .map(|&t| {
                let values = oracle_point_values(&source, &v, t, &self.separations, &settings)
                    .map_err(fail(name, format!("oracle at t={t}")))?;
                let mut rows = Vec::with_capacity(2 * values.len());
                for o in values {
                    let lower = o.value.norm() - o.error_estimate;
                    let lower_diff = (o.value - o.free_value).norm() - o.error_estimate;
                    rows.push(
                        ResultRecord::new(name, "cor33_dominates", lower, cor33_bound(o.x, t, &k))
                            .real("t", t)
                            .real("separation", o.x),
                    );
                    rows.push(
                        ResultRecord::new(
                            name,
                            "prop32_dominates",
                            lower_diff,
                            prop32_bound(o.x, t, self.sigma, 1, m.c_mu, m.m_max),
                        )
                        .real("t", t)
                        .real("separation", o.x),
                    );
                }
                Ok(rows)
            })
            .collect();
        records.extend(per_time?.into_iter().flatten());

        let w = interaction(&self.interaction, name)?;
        let rates = rate_functions(&k, &w, self.sigma);
        let polys = bound_polynomials(&k, &rates, &w);
        let mut remainder_meta = Value::Null;
        if let Some(r) = &self.remainder {
            let ln_r: Vec<f64> = (1..=r.max_order)
                .map(|n| ln_remainder_bound(n, r.time, r.f_l1, r.g_l2, &polys))
                .collect::<Result<_, _>>()
                .map_err(fail(name, "remainder".into()))?;
            let (best, ln_min) = ln_r
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, &l)| if l < acc.1 { (i + 1, l) } else { acc });
            records.push(
                ResultRecord::new(name, "remainder_tolerance", ln_min.exp(), r.tolerance)
                    .real("t", r.time)
                    .int("best_order", best)
                    .int("max_order", r.max_order),
            );
            remainder_meta = json!({
                "time": r.time,
                "ln_remainder": ln_r,
                "p1": polys.p1(r.time),
                "p2": polys.p2(r.time),
                "p3": polys.p3(r.time),
                "ln_d": polys.ln_d_factor(r.time),
            });
        }
        Ok(Outcome {
            records,
            metadata: json!({
                "constants": k,
                "rates": rates,
                "polynomials": polys,
                "oracle": { "max_spacing": settings.max_spacing, "max_time_step": settings.max_time_step },
                "remainder": remainder_meta,
            }),
        })
    }
}

fn lattice(sites: usize, spacing: f64, name: &str) -> Result<Lattice, CliError> {
    Lattice::new(sites, spacing, Boundary::Open).map_err(fail(name, "lattice".into()))
}

impl Experiment for FockExperiment {
    const KIND: &'static str = "fock-run";

    fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn run(&self, name: &str, _seed: Option<u64>) -> Result<Outcome, CliError> {
        let lat = lattice(self.sites, self.spacing, name)?;
        let region = match self.region {
            Some([lo, hi]) => Region::interval(lo, hi, &lat).map_err(fail(name, "region".into()))?,
            None => Region::all(&lat),
        };
        let v = potential(&self.potential, name)?;
        let w = interaction(&self.interaction, name)?;
        let sys = ManyBodySystem::new(&lat, &region, self.sigma, &w, &v).map_err(fail(name, "hamiltonian".into()))?;
        let f = ModeVector::site(&lat, self.source).map_err(fail(name, "source".into()))?;

        let m = measure_params(&v.measure);
        let k = cor33_constants(self.sigma, 1, m.c_mu, m.m_max).map_err(fail(name, "constants".into()))?;
        let polys = bound_polynomials(&k, &rate_functions(&k, &w, self.sigma), &w);
        let f_env = mode_envelope(&f, &lat);

        let values: Vec<(f64, f64)> = self
            .separations
            .par_iter()
            .map(|&sep| {
                let what = || format!("separation {sep}");
                let g = ModeVector::site(&lat, self.source + sep).map_err(fail(name, what()))?;
                let value = sys.f_function(&f, &g, self.time).map_err(fail(name, what()))?;
                let ln_bound = ln_many_body_bound(self.time, &f_env, &mode_envelope(&g, &lat), &polys)
                    .map_err(fail(name, what()))?;
                Ok((value, ln_bound))
            })
            .collect::<Result<_, CliError>>()?;

        let mut records = Vec::new();
        for (&sep, &(value, ln_bound)) in self.separations.iter().zip(&values) {
            records.push(
                ResultRecord::new(name, "ln_f_below_ln_bound", value.ln(), ln_bound)
                    .real("t", self.time)
                    .int("separation", sep),
            );
        }
        if self.require_decreasing {
            for (pair, seps) in values.windows(2).zip(self.separations.windows(2)) {
                records.push(
                    ResultRecord::new(name, "decreasing", pair[1].0, pair[0].0)
                        .int("from", seps[0])
                        .int("to", seps[1]),
                );
            }
        }
        let slope = if self.separations.len() >= 2 {
            let xs: Vec<f64> = self.separations.iter().map(|&s| s as f64).collect();
            let fs: Vec<f64> = values.iter().map(|p| p.0).collect();
            Some(log_slope(&xs, &fs))
        } else {
            None
        };
        if let (Some(max), Some(s)) = (self.max_slope, slope) {
            records.push(ResultRecord::new(name, "log_slope", s, max).real("t", self.time));
        }
        Ok(Outcome {
            records,
            metadata: json!({
                "region": region.sites(),
                "source": self.source,
                "f_values": values.iter().map(|p| p.0).collect::<Vec<_>>(),
                "log_slope": slope,
                "constants": k,
                "polynomials": polys,
                "packet_cutoff_widths": lr_fermi::fock::PACKET_CUTOFF,
            }),
        })
    }
}

impl Experiment for ThermoExperiment {
    const KIND: &'static str = "thermo-limit";

    fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn run(&self, name: &str, _seed: Option<u64>) -> Result<Outcome, CliError> {
        let lat = lattice(self.sites, self.spacing, name)?;
        let v = potential(&self.potential, name)?;
        let w = interaction(&self.interaction, name)?;
        let c = self.centre();
        let f = ModeVector::site(&lat, c).map_err(fail(name, "centre".into()))?;
        let evolved: Vec<_> = (0..=self.shells())
            .into_par_iter()
            .map(|k| {
                let what = || format!("region [{}, {}]", c - k, c + k);
                let region = Region::interval(c - k, c + k, &lat).map_err(fail(name, what()))?;
                ManyBodySystem::new(&lat, &region, self.sigma, &w, &v)
                    .and_then(|s| s.evolved_annihilator(&f, self.time))
                    .map_err(fail(name, what()))
            })
            .collect::<Result<_, CliError>>()?;
        let gaps: Vec<f64> = evolved
            .windows(2)
            .map(|p| p[1].sub(&p[0]).map(|d| d.norm()))
            .collect::<Result<_, _>>()
            .map_err(fail(name, "gap".into()))?;

        let mut records = Vec::new();
        for (k, &gap) in gaps.iter().enumerate() {
            records.push(ResultRecord::new(name, "gap_trivial_bound", gap, 2.0 * f.norm()).int("shell", k + 1));
        }
        for (k, pair) in gaps.windows(2).enumerate() {
            records.push(ResultRecord::new(name, "gap_decreasing", pair[1], pair[0]).int("shell", k + 2));
        }
        let ratio = gaps[gaps.len() - 1] / gaps[0];
        records.push(ResultRecord::new(name, "tail_ratio", ratio, self.max_ratio).int("shells", gaps.len()));
        Ok(Outcome {
            records,
            metadata: json!({ "centre": c, "gaps": gaps, "time": self.time }),
        })
    }
}

impl Experiment for SigmaExperiment {
    const KIND: &'static str = "sigma-scan";

    fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn run(&self, name: &str, _seed: Option<u64>) -> Result<Outcome, CliError> {
        let [x0, y0] = self.centre;
        let two_w2 = 2.0 * self.width * self.width;
        let psi = TwoParticleGrid::from_fn(
            |x, y| Complex64::from((-((x - x0).powi(2) + (y - y0).powi(2)) / two_w2).exp()),
            self.points,
            self.box_length,
        )
        .map_err(fail(name, "grid".into()))?;
        let w = interaction(&self.interaction, name)?;
        let region = self.region();
        let errors: Vec<f64> = self
            .sigmas
            .par_iter()
            .map(|&s| sigma_limit_error(&psi, region, &w, s).map_err(fail(name, format!("sigma {s}"))))
            .collect::<Result<_, CliError>>()?;

        // Smearing is a contraction, so the difference is at most 2 ||W||_inf ||psi||.
        let trivial = 2.0 * w.sup_norm() * psi.norm();
        let mut records = Vec::new();
        for (&s, &e) in self.sigmas.iter().zip(&errors) {
            records.push(ResultRecord::new(name, "error_trivial_bound", e, trivial).real("sigma", s));
        }
        for (pair, sig) in errors.windows(2).zip(self.sigmas.windows(2)) {
            records.push(
                ResultRecord::new(name, "successive_ratio", pair[1] / pair[0], self.max_ratio)
                    .real("sigma_from", sig[0])
                    .real("sigma_to", sig[1]),
            );
        }
        Ok(Outcome {
            records,
            metadata: json!({
                "region": [region.0, region.1],
                "spacing": psi.spacing(),
                "psi_norm": psi.norm(),
                "errors": errors,
            }),
        })
    }
}
