//! Flat `key = value` run configuration: scenario selection plus overrides
//! for every packet, field, spin and integrator parameter. The format
//! round-trips losslessly (floats are written in shortest round-trip
//! decimal form).

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use zigzag_core::integrator::{IntegratorSettings, RecordOptions};
use zigzag_core::scenarios::{find, ScenarioKind, ScenarioSpec};
use zigzag_core::states::{FieldAxis, FieldProfile, PacketParams};

/// How batch-level trajectory failures map to the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailPolicy {
    /// Any failed trajectory fails the run.
    Any,
    /// Tolerate up to this many failed trajectories.
    Tolerate(usize),
}

impl FailPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "any" {
            return Ok(FailPolicy::Any);
        }
        if let Some(k) = s.strip_prefix("tolerate:") {
            return Ok(FailPolicy::Tolerate(k.parse().context("fail_policy tolerate count")?));
        }
        bail!("fail_policy must be `any` or `tolerate:<k>`, got `{s}`")
    }
}

impl std::fmt::Display for FailPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FailPolicy::Any => write!(f, "any"),
            FailPolicy::Tolerate(k) => write!(f, "tolerate:{k}"),
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
    pub out_dir: String,
    /// Export thinning: keep every recorded row (0) or at this time stride.
    pub stride_time: f64,
    pub sample_at: Vec<f64>,
    pub keep_events: bool,
    /// Apply the display rescale (divide coordinates and times by
    /// `display_rescale`) at export.
    pub rescale: bool,
    pub display_rescale: f64,
    pub fail_policy: FailPolicy,
    // packet
    pub d_x: f64,
    pub d_y: f64,
    pub d_z: f64,
    pub p: f64,
    // field
    pub b: f64,
    pub t_i: f64,
    pub t_f: f64,
    pub field_axis: FieldAxis,
    // spin content
    pub c_plus: Complex64,
    pub c_minus: Complex64,
    pub a: f64,
    pub b_spin: f64,
    pub sg_on_first: bool,
    // integration
    pub t_total: f64,
    pub abs_tolerance: f64,
    pub rate_dt_cap: f64,
    pub max_dt: f64,
    pub min_dt: f64,
    pub initial_dt: f64,
}

impl RunConfig {
    /// Defaults for a catalog scenario.
    pub fn for_scenario(spec: &ScenarioSpec) -> Self {
        let (c_plus, c_minus, a, b_spin, sg_on_first) = match spec.kind {
            ScenarioKind::Single { c_plus, c_minus } => (c_plus, c_minus, 0.0, 0.0, false),
            ScenarioKind::Epr { sg_on_first, a, b_spin } => (
                Complex64::ZERO,
                Complex64::ZERO,
                a,
                b_spin,
                sg_on_first,
            ),
        };
        Self {
            scenario: spec.id.clone(),
            n: spec.trajectories,
            seed: 0,
            workers: 0,
            out_dir: default_out_dir(),
            stride_time: 0.0,
            sample_at: Vec::new(),
            keep_events: true,
            rescale: false,
            display_rescale: spec.display_rescale,
            fail_policy: FailPolicy::Any,
            d_x: spec.packet.d_x,
            d_y: spec.packet.d_y,
            d_z: spec.packet.d_z,
            p: spec.packet.p,
            b: spec.field.b,
            t_i: spec.field.t_i,
            t_f: spec.field.t_f,
            field_axis: spec.field_axis,
            c_plus,
            c_minus,
            a,
            b_spin,
            sg_on_first,
            t_total: spec.t_total,
            abs_tolerance: spec.settings.abs_tolerance,
            rate_dt_cap: spec.settings.rate_dt_cap,
            max_dt: spec.settings.max_dt,
            min_dt: spec.settings.min_dt,
            initial_dt: spec.settings.initial_dt,
        }
    }

    pub fn for_scenario_id(id: &str) -> Result<Self> {
        let spec = find(id).ok_or_else(|| {
            anyhow!("unknown scenario `{id}`; see `zigzag list-scenarios`")
        })?;
        Ok(Self::for_scenario(&spec))
    }

    /// The scenario with every override applied.
    pub fn resolved_spec(&self) -> Result<ScenarioSpec> {
        let base = find(&self.scenario)
            .ok_or_else(|| anyhow!("unknown scenario `{}`", self.scenario))?;
        let kind = match base.kind {
            ScenarioKind::Single { .. } => {
                ScenarioKind::Single { c_plus: self.c_plus, c_minus: self.c_minus }
            }
            ScenarioKind::Epr { .. } => ScenarioKind::Epr {
                sg_on_first: self.sg_on_first,
                a: self.a,
                b_spin: self.b_spin,
            },
        };
        Ok(ScenarioSpec {
            id: base.id,
            kind,
            packet: PacketParams::new(self.d_x, self.d_y, self.d_z, self.p)
                .map_err(|e| anyhow!("packet: {e}"))?,
            field: FieldProfile::new(self.b, self.t_i, self.t_f)
                .map_err(|e| anyhow!("field: {e}"))?,
            field_axis: self.field_axis,
            t_total: self.t_total,
            trajectories: self.n,
            settings: self.integrator_settings(),
            display_rescale: self.display_rescale,
        })
    }

    pub fn integrator_settings(&self) -> IntegratorSettings {
        IntegratorSettings {
            abs_tolerance: self.abs_tolerance,
            rate_dt_cap: self.rate_dt_cap,
            max_dt: self.max_dt,
            min_dt: self.min_dt,
            initial_dt: self.initial_dt,
            t_final: self.t_total,
            rng_seed: self.seed,
            record: RecordOptions {
                stride_time: self.stride_time,
                sample_at: self.sample_at.clone(),
                keep_events: self.keep_events,
            },
        }
    }

    /// Serialize as `key = value` lines, one concern per line.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("scenario", self.scenario.clone());
        kv("n", self.n.to_string());
        kv("seed", self.seed.to_string());
        kv("workers", self.workers.to_string());
        kv("out_dir", self.out_dir.clone());
        kv("stride_time", self.stride_time.to_string());
        kv(
            "sample_at",
            self.sample_at.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(","),
        );
        kv("keep_events", self.keep_events.to_string());
        kv("rescale", self.rescale.to_string());
        kv("display_rescale", self.display_rescale.to_string());
        kv("fail_policy", self.fail_policy.to_string());
        kv("d_x", self.d_x.to_string());
        kv("d_y", self.d_y.to_string());
        kv("d_z", self.d_z.to_string());
        kv("p", self.p.to_string());
        kv("b", self.b.to_string());
        kv("t_i", self.t_i.to_string());
        kv("t_f", self.t_f.to_string());
        kv("field_axis", match self.field_axis {
            FieldAxis::Z => "z".into(),
            FieldAxis::Y => "y".into(),
        });
        kv("c_plus_re", self.c_plus.re.to_string());
        kv("c_plus_im", self.c_plus.im.to_string());
        kv("c_minus_re", self.c_minus.re.to_string());
        kv("c_minus_im", self.c_minus.im.to_string());
        kv("a", self.a.to_string());
        kv("b_spin", self.b_spin.to_string());
        kv("sg_on_first", self.sg_on_first.to_string());
        kv("t_total", self.t_total.to_string());
        kv("abs_tolerance", self.abs_tolerance.to_string());
        kv("rate_dt_cap", self.rate_dt_cap.to_string());
        kv("max_dt", self.max_dt.to_string());
        kv("min_dt", self.min_dt.to_string());
        kv("initial_dt", self.initial_dt.to_string());
        s
    }

    /// Apply one `key = value` override.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "scenario" => {
                // re-derive scenario-kind defaults, keep everything else
                let fresh = Self::for_scenario_id(v)?;
                self.scenario = fresh.scenario;
                self.c_plus = fresh.c_plus;
                self.c_minus = fresh.c_minus;
                self.a = fresh.a;
                self.b_spin = fresh.b_spin;
                self.sg_on_first = fresh.sg_on_first;
            }
            "n" => self.n = v.parse().context("n")?,
            "seed" => self.seed = v.parse().context("seed")?,
            "workers" => self.workers = v.parse().context("workers")?,
            "out_dir" => self.out_dir = v.to_string(),
            "stride_time" => self.stride_time = parse_f64(v, key)?,
            "sample_at" => {
                self.sample_at = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',')
                        .map(|t| parse_f64(t.trim(), key))
                        .collect::<Result<Vec<_>>>()?
                };
            }
            "keep_events" => self.keep_events = parse_bool(v, key)?,
            "rescale" => self.rescale = parse_bool(v, key)?,
            "display_rescale" => self.display_rescale = parse_f64(v, key)?,
            "fail_policy" => self.fail_policy = FailPolicy::parse(v)?,
            "d_x" => self.d_x = parse_f64(v, key)?,
            "d_y" => self.d_y = parse_f64(v, key)?,
            "d_z" => self.d_z = parse_f64(v, key)?,
            "p" => self.p = parse_f64(v, key)?,
            "b" => self.b = parse_f64(v, key)?,
            "t_i" => self.t_i = parse_f64(v, key)?,
            "t_f" => self.t_f = parse_f64(v, key)?,
            "field_axis" => {
                self.field_axis = match v {
                    "z" | "Z" => FieldAxis::Z,
                    "y" | "Y" => FieldAxis::Y,
                    other => bail!("field_axis must be `z` or `y`, got `{other}`"),
                }
            }
            "c_plus_re" => self.c_plus.re = parse_f64(v, key)?,
            "c_plus_im" => self.c_plus.im = parse_f64(v, key)?,
            "c_minus_re" => self.c_minus.re = parse_f64(v, key)?,
            "c_minus_im" => self.c_minus.im = parse_f64(v, key)?,
            "a" => self.a = parse_f64(v, key)?,
            "b_spin" => self.b_spin = parse_f64(v, key)?,
            "sg_on_first" => self.sg_on_first = parse_bool(v, key)?,
            "t_total" => self.t_total = parse_f64(v, key)?,
            "abs_tolerance" => self.abs_tolerance = parse_f64(v, key)?,
            "rate_dt_cap" => self.rate_dt_cap = parse_f64(v, key)?,
            "max_dt" => self.max_dt = parse_f64(v, key)?,
            "min_dt" => self.min_dt = parse_f64(v, key)?,
            "initial_dt" => self.initial_dt = parse_f64(v, key)?,
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    /// Parse a config file body (`key = value` lines, `#` comments).
    pub fn apply_config_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", lineno + 1))?;
            self.apply(key.trim(), value)
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }
}

fn parse_f64(v: &str, key: &str) -> Result<f64> {
    v.parse::<f64>().map_err(|e| anyhow!("{key}: cannot parse `{v}` as a number ({e})"))
}

fn parse_bool(v: &str, key: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => bail!("{key}: cannot parse `{other}` as a boolean"),
    }
}

pub fn default_out_dir() -> String {
    std::env::var("ZIGZAG_OUT_DIR").unwrap_or_else(|_| "out".to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn config_round_trips_losslessly() {
        let mut cfg = RunConfig::for_scenario_id("SPIN_WEIGHTED").unwrap();
        cfg.seed = 42;
        cfg.stride_time = 0.30000000000000004;
        cfg.sample_at = vec![5e4, 99999.99999999999];
        cfg.abs_tolerance = 1.0000000000000002e-10;
        cfg.fail_policy = FailPolicy::Tolerate(3);
        let text = cfg.to_config_text();
        let mut parsed = RunConfig::for_scenario_id("SPIN_WEIGHTED").unwrap();
        parsed.apply_config_text(&text).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line_numbers() {
        let mut cfg = RunConfig::for_scenario_id("SPIN_Y_SINGLE").unwrap();
        let err = cfg.apply_config_text("n = 5\nbogus = 1\n").unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("bogus"), "{msg}");
    }

    #[test]
    fn scenario_key_rederives_spin_content() {
        let mut cfg = RunConfig::for_scenario_id("SPIN_Y_SINGLE").unwrap();
        cfg.apply("scenario", "EPR_SG").unwrap();
        assert!(cfg.sg_on_first);
        assert!((cfg.a - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn float_overrides_round_trip(
            tol in 1e-14f64..1e-6,
            stride in 0.0f64..1e4,
            t_total in 1.0f64..2e5,
        ) {
            let mut cfg = RunConfig::for_scenario_id("SPIN_WEIGHTED").unwrap();
            cfg.abs_tolerance = tol;
            cfg.stride_time = stride;
            cfg.t_total = t_total;
            let mut parsed = RunConfig::for_scenario_id("SPIN_WEIGHTED").unwrap();
            parsed.apply_config_text(&cfg.to_config_text()).unwrap();
            prop_assert_eq!(cfg, parsed);
        }
    }
}
