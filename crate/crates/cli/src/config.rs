//! JSON experiment descriptions. Each experiment is parsed and validated
//! separately so that every error is anchored to a line and column of the
//! config file.

use std::fmt::{self, Display};

use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::value::RawValue;

/// A parsed config document: an optional seed and the experiments, whose
/// shape depends on the subcommand.
#[derive(Debug)]
pub struct ConfigFile<E> {
    pub seed: Option<u64>,
    pub experiments: Vec<E>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig<'a> {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default, borrow)]
    experiments: Vec<&'a RawValue>,
}

pub trait Validate {
    fn validate(&self) -> Result<(), String>;
}

/// Parse or validation failure at a 1-based line and column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {} column {}: {}", self.line, self.column, self.message)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn parse<E: Validate + DeserializeOwned>(text: &str) -> Result<ConfigFile<E>, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| ConfigError {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;
    let mut experiments = Vec::with_capacity(raw.experiments.len());
    for (i, item) in raw.experiments.iter().enumerate() {
        // The raw value borrows from `text`, so its offset is exact.
        let offset = item.get().as_ptr() as usize - text.as_ptr() as usize;
        let (line, column) = line_col(text, offset);
        let exp: E = serde_json::from_str(item.get()).map_err(|e| ConfigError {
            line: line + e.line() - 1,
            column: if e.line() == 1 { column + e.column() - 1 } else { e.column() },
            message: format!("experiment {i}: {}", strip_position(&e)),
        })?;
        exp.validate().map_err(|m| ConfigError {
            line,
            column,
            message: format!("experiment {i}: {m}"),
        })?;
        experiments.push(exp);
    }
    Ok(ConfigFile {
        seed: raw.seed,
        experiments,
    })
}

/// serde_json appends " at line L column C"; we report our own position.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

fn ensure(cond: bool, msg: impl Display) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.to_string())
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    ensure(v > 0.0 && v.is_finite(), format!("{name} must be positive and finite, got {v}"))
}

fn all_positive(name: &str, vs: &[f64]) -> Result<(), String> {
    vs.iter().try_for_each(|&v| positive(name, v))
}

/// `V(x) = sum amplitude cos(wave_vector . x)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineTerm {
    pub wave_vector: Vec<f64>,
    pub amplitude: f64,
}

fn check_potential(terms: &[CosineTerm], dimension: usize) -> Result<(), String> {
    for term in terms {
        ensure(
            term.wave_vector.len() == dimension,
            format!("wave vector {:?} does not have dimension {dimension}", term.wave_vector),
        )?;
        ensure(
            term.amplitude.is_finite() && term.wave_vector.iter().all(|v| v.is_finite()),
            "potential terms must be finite",
        )?;
    }
    Ok(())
}

fn reference_potential() -> Vec<CosineTerm> {
    vec![CosineTerm {
        wave_vector: vec![1.0],
        amplitude: 2.0,
    }]
}

/// `W(x) = strength e^{-rate |x|}`; strength 0 is the zero interaction.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionSpec {
    pub strength: f64,
    #[serde(default = "one")]
    pub rate: f64,
}

impl Default for InteractionSpec {
    fn default() -> Self {
        InteractionSpec {
            strength: 1.0,
            rate: 1.0,
        }
    }
}

impl InteractionSpec {
    fn check(&self) -> Result<(), String> {
        ensure(
            self.strength >= 0.0 && self.strength.is_finite(),
            format!("interaction strength must be nonnegative, got {}", self.strength),
        )?;
        positive("interaction rate", self.rate)
    }
}

fn one() -> f64 {
    1.0
}

fn steps(lo: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|i| lo + step * i as f64).collect()
}

// ---------------------------------------------------------------- special

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpecialExperiment {
    pub name: Option<String>,
    pub dimension: usize,
    pub rates: Vec<f64>,
    pub factors: Vec<usize>,
    pub radius_max: f64,
    pub radius_points: usize,
    pub bessel_orders: Vec<f64>,
    pub bessel_y_max: f64,
    pub bessel_points: usize,
    /// Relative tolerance of the two-fold closed-form check (d = 1 only).
    pub closed_form_tolerance: f64,
}

impl Default for SpecialExperiment {
    fn default() -> Self {
        SpecialExperiment {
            name: None,
            dimension: 1,
            rates: vec![0.5, 1.0, 2.0],
            factors: vec![2, 3, 4, 5],
            radius_max: 10.0,
            radius_points: 200,
            bessel_orders: vec![0.5, 1.0, 1.5, 2.0, 3.0, 5.0],
            bessel_y_max: 20.0,
            bessel_points: 400,
            closed_form_tolerance: 1e-10,
        }
    }
}

impl Validate for SpecialExperiment {
    fn validate(&self) -> Result<(), String> {
        ensure((1..=3).contains(&self.dimension), "dimension must be 1, 2 or 3")?;
        all_positive("rate", &self.rates)?;
        ensure(self.factors.iter().all(|&n| n >= 2), "convolutions need at least two factors")?;
        positive("radius_max", self.radius_max)?;
        ensure(self.radius_points >= 2, "radius_points must be at least 2")?;
        all_positive("Bessel order", &self.bessel_orders)?;
        positive("bessel_y_max", self.bessel_y_max)?;
        ensure(self.bessel_points >= 1, "bessel_points must be at least 1")?;
        positive("closed_form_tolerance", self.closed_form_tolerance)
    }
}

// ----------------------------------------------------------- one-particle

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSpec {
    pub gauss_nodes: usize,
    pub max_gauss_order: usize,
    pub mc_strata: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            gauss_nodes: 16,
            max_gauss_order: 4,
            mc_strata: 4096,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub max_spacing: f64,
    pub max_time_step: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        OracleSpec {
            max_spacing: 0.125,
            max_time_step: 5e-4,
        }
    }
}

impl OracleSpec {
    fn check(&self) -> Result<(), String> {
        positive("oracle max_spacing", self.max_spacing)?;
        positive("oracle max_time_step", self.max_time_step)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OneParticleExperiment {
    pub name: Option<String>,
    pub sigma: f64,
    pub potential: Vec<CosineTerm>,
    pub times: Vec<f64>,
    /// Offsets `x - y` of the probe point from the source centre.
    pub separations: Vec<f64>,
    pub order: usize,
    pub quadrature: QuadratureSpec,
    pub oracle: OracleSpec,
    /// Absolute slack added to the certified budget.
    pub tolerance: f64,
    pub seed: Option<u64>,
}

impl Default for OneParticleExperiment {
    fn default() -> Self {
        OneParticleExperiment {
            name: None,
            sigma: 1.0,
            potential: reference_potential(),
            times: vec![0.1, 0.25, 0.5, 1.0],
            separations: vec![0.0],
            order: 8,
            quadrature: QuadratureSpec::default(),
            oracle: OracleSpec::default(),
            tolerance: 1e-3,
            seed: None,
        }
    }
}

impl OneParticleExperiment {
    pub fn uses_monte_carlo(&self) -> bool {
        self.order > self.quadrature.max_gauss_order
    }
}

impl Validate for OneParticleExperiment {
    fn validate(&self) -> Result<(), String> {
        positive("sigma", self.sigma)?;
        check_potential(&self.potential, 1)?;
        all_positive("time", &self.times)?;
        ensure(self.separations.iter().all(|s| s.is_finite()), "separations must be finite")?;
        ensure(self.order >= 1, "truncation order must be at least 1")?;
        ensure(self.quadrature.gauss_nodes >= 1, "gauss_nodes must be at least 1")?;
        ensure(self.quadrature.mc_strata >= 1, "mc_strata must be at least 1")?;
        self.oracle.check()?;
        ensure(self.tolerance >= 0.0, "tolerance must be nonnegative")
    }
}

// ----------------------------------------------------------------- bounds

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemainderSpec {
    pub time: f64,
    pub max_order: usize,
    pub tolerance: f64,
    pub f_l1: f64,
    pub g_l2: f64,
}

impl Default for RemainderSpec {
    fn default() -> Self {
        RemainderSpec {
            time: 1.0,
            max_order: 60,
            tolerance: 1e-6,
            f_l1: 1.0,
            g_l2: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsExperiment {
    pub name: Option<String>,
    pub sigma: f64,
    pub potential: Vec<CosineTerm>,
    pub times: Vec<f64>,
    pub separations: Vec<f64>,
    pub calibration_horizon: f64,
    pub calibration_points: usize,
    pub oracle: OracleSpec,
    pub interaction: InteractionSpec,
    /// Optional check that the many-body remainder reaches a tolerance.
    pub remainder: Option<RemainderSpec>,
}

impl Default for BoundsExperiment {
    fn default() -> Self {
        BoundsExperiment {
            name: None,
            sigma: 1.0,
            potential: reference_potential(),
            times: steps(0.1, 0.1, 20),
            separations: steps(0.0, 0.5, 41),
            calibration_horizon: 10.0,
            calibration_points: 1000,
            oracle: OracleSpec::default(),
            interaction: InteractionSpec::default(),
            remainder: None,
        }
    }
}

impl Validate for BoundsExperiment {
    fn validate(&self) -> Result<(), String> {
        positive("sigma", self.sigma)?;
        check_potential(&self.potential, 1)?;
        all_positive("time", &self.times)?;
        ensure(
            self.separations.iter().all(|s| s.is_finite() && *s >= 0.0),
            "separations must be finite and nonnegative",
        )?;
        positive("calibration_horizon", self.calibration_horizon)?;
        ensure(self.calibration_points >= 1, "calibration_points must be at least 1")?;
        self.oracle.check()?;
        self.interaction.check()?;
        if let Some(r) = &self.remainder {
            positive("remainder time", r.time)?;
            ensure(r.max_order >= 1, "remainder max_order must be at least 1")?;
            positive("remainder tolerance", r.tolerance)?;
            positive("remainder f_l1", r.f_l1)?;
            positive("remainder g_l2", r.g_l2)?;
        }
        Ok(())
    }
}

// ------------------------------------------------------------------- fock

const MAX_SITES: usize = lr_fermi::fock::MAX_SITES;

fn check_lattice(sites: usize, spacing: f64) -> Result<(), String> {
    ensure(
        (1..=MAX_SITES).contains(&sites),
        format!("sites must be between 1 and {MAX_SITES}, got {sites}"),
    )?;
    positive("spacing", spacing)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FockExperiment {
    pub name: Option<String>,
    pub sites: usize,
    pub spacing: f64,
    pub sigma: f64,
    pub interaction: InteractionSpec,
    pub potential: Vec<CosineTerm>,
    /// Inclusive site interval `[lo, hi]`; the whole lattice when absent.
    pub region: Option<[usize; 2]>,
    pub time: f64,
    /// Site of `f`; `g` sits at `source + separation`.
    pub source: usize,
    pub separations: Vec<usize>,
    pub require_decreasing: bool,
    /// Upper limit on the fitted log-slope per site, if checked.
    pub max_slope: Option<f64>,
}

impl Default for FockExperiment {
    fn default() -> Self {
        FockExperiment {
            name: None,
            sites: 10,
            spacing: 0.5,
            sigma: 1.0,
            interaction: InteractionSpec::default(),
            potential: Vec::new(),
            region: Some([1, 3]),
            time: 0.5,
            source: 2,
            separations: vec![2, 3, 4, 5, 6],
            require_decreasing: true,
            max_slope: Some(-0.3),
        }
    }
}

impl Validate for FockExperiment {
    fn validate(&self) -> Result<(), String> {
        check_lattice(self.sites, self.spacing)?;
        positive("sigma", self.sigma)?;
        self.interaction.check()?;
        check_potential(&self.potential, 1)?;
        if let Some([lo, hi]) = self.region {
            ensure(lo <= hi && hi < self.sites, format!("region [{lo}, {hi}] is not inside the lattice"))?;
        }
        ensure(self.time.is_finite(), "time must be finite")?;
        ensure(self.source < self.sites, "source site is outside the lattice")?;
        ensure(
            self.separations.iter().all(|s| self.source + s < self.sites),
            "every source + separation must be a lattice site",
        )?;
        if self.max_slope.is_some() {
            ensure(self.separations.len() >= 2, "a slope fit needs at least two separations")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermoExperiment {
    pub name: Option<String>,
    pub sites: usize,
    pub spacing: f64,
    pub sigma: f64,
    pub interaction: InteractionSpec,
    pub potential: Vec<CosineTerm>,
    pub time: f64,
    /// Site of `f`; defaults to `sites / 2`.
    pub centre: Option<usize>,
    /// Largest half-width `k` of `[centre - k, centre + k]`; defaults to the
    /// largest that fits.
    pub shells: Option<usize>,
    pub max_ratio: f64,
}

impl Default for ThermoExperiment {
    fn default() -> Self {
        ThermoExperiment {
            name: None,
            sites: 10,
            spacing: 1.0,
            sigma: 0.5,
            interaction: InteractionSpec::default(),
            potential: Vec::new(),
            time: 0.5,
            centre: None,
            shells: None,
            max_ratio: 0.2,
        }
    }
}

impl ThermoExperiment {
    pub fn centre(&self) -> usize {
        self.centre.unwrap_or(self.sites / 2)
    }

    pub fn shells(&self) -> usize {
        let c = self.centre();
        self.shells.unwrap_or(c.min(self.sites - 1 - c))
    }
}

impl Validate for ThermoExperiment {
    fn validate(&self) -> Result<(), String> {
        check_lattice(self.sites, self.spacing)?;
        positive("sigma", self.sigma)?;
        self.interaction.check()?;
        check_potential(&self.potential, 1)?;
        ensure(self.time.is_finite(), "time must be finite")?;
        let c = self.centre();
        ensure(c < self.sites, "centre site is outside the lattice")?;
        let k = self.shells();
        ensure(k >= 2, "at least two shells are needed to compare gaps")?;
        ensure(c >= k && c + k < self.sites, format!("{k} shells around site {c} do not fit"))?;
        positive("max_ratio", self.max_ratio)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaExperiment {
    pub name: Option<String>,
    pub box_length: f64,
    pub points: usize,
    /// Centre `(x0, y0)` of `psi(x, y) = exp(-((x-x0)^2 + (y-y0)^2) / (2 w^2))`.
    pub centre: [f64; 2],
    pub width: f64,
    pub interaction: InteractionSpec,
    /// `Lambda = [lo, hi]`; the central half of the box when absent.
    pub region: Option<[f64; 2]>,
    pub sigmas: Vec<f64>,
    pub max_ratio: f64,
}

impl Default for SigmaExperiment {
    fn default() -> Self {
        SigmaExperiment {
            name: None,
            box_length: 16.0,
            points: 1024,
            centre: [0.7, -0.5],
            width: std::f64::consts::FRAC_1_SQRT_2,
            interaction: InteractionSpec::default(),
            region: None,
            sigmas: vec![0.8, 0.4, 0.2, 0.1],
            max_ratio: 0.8,
        }
    }
}

impl SigmaExperiment {
    pub fn region(&self) -> (f64, f64) {
        match self.region {
            Some([lo, hi]) => (lo, hi),
            None => (-0.25 * self.box_length, 0.25 * self.box_length),
        }
    }
}

impl Validate for SigmaExperiment {
    fn validate(&self) -> Result<(), String> {
        positive("box_length", self.box_length)?;
        ensure(self.points >= 2, "points must be at least 2")?;
        ensure(self.centre.iter().all(|c| c.is_finite()), "centre must be finite")?;
        positive("width", self.width)?;
        self.interaction.check()?;
        if let Some([lo, hi]) = self.region {
            ensure(lo < hi, "region must satisfy lo < hi")?;
        }
        all_positive("sigma", &self.sigmas)?;
        ensure(!self.sigmas.is_empty(), "sigmas must not be empty")?;
        positive("max_ratio", self.max_ratio)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_has_no_experiments() {
        let cfg: ConfigFile<SpecialExperiment> = parse("{}").unwrap();
        assert!(cfg.experiments.is_empty() && cfg.seed.is_none());
    }

    #[test]
    fn defaults_fill_missing_fields() {
        let cfg: ConfigFile<OneParticleExperiment> = parse(r#"{"experiments": [{"sigma": 2.0}]}"#).unwrap();
        let e = &cfg.experiments[0];
        assert_eq!(e.sigma, 2.0);
        assert_eq!(e.order, 8);
        assert_eq!(e.potential.len(), 1);
    }

    #[test]
    fn validation_errors_carry_a_line() {
        let text = "{\n  \"experiments\": [\n    {\"sigma\": 1.0},\n    {\"sigma\": -1.0}\n  ]\n}";
        let err = parse::<BoundsExperiment>(text).unwrap_err();
        assert_eq!((err.line, err.column), (4, 5), "{err}");
        assert!(err.message.contains("experiment 1") && err.message.contains("sigma"));
    }

    #[test]
    fn type_errors_are_anchored_inside_the_experiment() {
        let text = "{\"experiments\": [\n  {\n    \"sites\": 4,\n    \"spacing\": \"wide\"\n  }\n]}";
        let err = parse::<FockExperiment>(text).unwrap_err();
        assert_eq!(err.line, 4, "{err}");
        let err = parse::<FockExperiment>("{\"experiments\": [{\"sites\": -4}]}").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(err.column > 18, "{err}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(parse::<FockExperiment>(r#"{"experiments": [{"sitez": 4}]}"#).is_err());
        assert!(parse::<FockExperiment>(r#"{"experiment": []}"#).is_err());
    }

    #[test]
    fn lattice_limits() {
        assert!(parse::<FockExperiment>(r#"{"experiments": [{"sites": 15}]}"#).is_err());
        assert!(parse::<FockExperiment>(r#"{"experiments": [{"source": 5}]}"#).is_err());
        assert!(parse::<ThermoExperiment>(r#"{"experiments": [{"sites": 4, "shells": 3}]}"#).is_err());
    }
}
