//! Run configuration: INI-style text with dotted section names.
//!
//! ```text
//! [mesh]
//! nx = 16
//! ny = 16
//! domain = 0 1 0 1
//!
//! [scheme]
//! kind = pressure_correction
//! dt = 0.01          # or mach_uniform
//! ```
//!
//! Unknown sections or keys are errors, reported with their line number.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use stagflow::cases::{SmoothData, SweepSpec, TimeStep, Tolerances};
use stagflow::operators::Convection;
use stagflow::schemes::SchemeKind;
use stagflow::vortex::{SourceMode, ViscosityMode, VortexParams, MACH_SET};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn at(line: usize, msg: impl Into<String>) -> ConfigError {
    ConfigError::Line { line, msg: msg.into() }
}

/// Raw parsed text: section → key → (value, line).
#[derive(Debug, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
    headers: BTreeMap<String, usize>,
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split(['#', ';']).next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| at(line, "unterminated section header"))?.trim();
                if name.is_empty() || !name.split('.').all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')) {
                    return Err(at(line, format!("bad section name '{name}'")));
                }
                if ini.headers.insert(name.to_owned(), line).is_some() {
                    return Err(at(line, format!("duplicate section [{name}]")));
                }
                ini.sections.entry(name.to_owned()).or_default();
                current = Some(name.to_owned());
                continue;
            }
            let (k, v) = body.split_once('=').ok_or_else(|| at(line, format!("expected 'key = value', got '{body}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(at(line, "empty key"));
            }
            let sec = current.as_ref().ok_or_else(|| at(line, "key outside of any section"))?;
            let map = ini.sections.get_mut(sec).expect("section exists");
            if map.insert(k.to_owned(), (v.to_owned(), line)).is_some() {
                return Err(at(line, format!("duplicate key '{k}' in [{sec}]")));
            }
        }
        Ok(ini)
    }
}

/// Reads typed values out of one section and remembers which keys were used.
struct Section<'a> {
    name: &'a str,
    map: Option<&'a BTreeMap<String, (String, usize)>>,
    used: Vec<&'a str>,
}

impl<'a> Section<'a> {
    fn get<T: FromStr>(&mut self, key: &'a str) -> Result<Option<T>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.used.push(key);
        match self.map.and_then(|m| m.get(key)) {
            None => Ok(None),
            Some((v, line)) => v.parse::<T>().map(Some).map_err(|e| at(*line, format!("[{}] {key}: {e}", self.name))),
        }
    }

    fn or<T: FromStr>(&mut self, key: &'a str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn list(&mut self, key: &'a str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.used.push(key);
        match self.map.and_then(|m| m.get(key)) {
            None => Ok(None),
            Some((v, line)) => parse_list(v).map(Some).map_err(|e| at(*line, format!("[{}] {key}: {e}", self.name))),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.map.and_then(|m| m.get(key)).map_or(0, |(_, l)| *l)
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(m) = self.map {
            if let Some((k, (_, line))) = m.iter().find(|(k, _)| !self.used.contains(&k.as_str())) {
                return Err(at(*line, format!("unknown key '{k}' in [{}]", self.name)));
            }
        }
        Ok(())
    }
}

/// Numbers separated by commas and/or whitespace.
pub fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(|s| s.parse::<f64>().map_err(|e| format!("'{s}': {e}"))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtSpec {
    Fixed(f64),
    MachUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Case {
    Rest,
    Smooth(SmoothData),
    Random { seed: u64 },
    Vortex { params: VortexParams, c_ms: Vec<f64> },
}

impl Case {
    pub fn name(&self) -> &'static str {
        match self {
            Case::Rest => "rest",
            Case::Smooth(_) => "smooth",
            Case::Random { .. } => "random",
            Case::Vortex { .. } => "vortex",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub domain: [f64; 4],
    pub kind: SchemeKind,
    pub dt: DtSpec,
    pub t_end: f64,
    pub eps: f64,
    pub gamma: f64,
    pub mu: f64,
    pub lambda: f64,
    pub eta: f64,
    pub c0: Option<f64>,
    pub convection: Convection,
    /// Run the semi-implicit scheme even if δt exceeds its CFL bound.
    pub allow_cfl_violation: bool,
    pub case: Case,
    pub tolerances: Tolerances,
    pub out_dir: String,
    /// Write field snapshots every this many steps (0: final only).
    pub snapshot_every: usize,
    pub sweep_eps: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            nx: 16,
            ny: 16,
            domain: [0.0, 1.0, 0.0, 1.0],
            kind: SchemeKind::PressureCorrection,
            dt: DtSpec::Fixed(0.01),
            t_end: 0.1,
            eps: 0.1,
            gamma: 1.4,
            mu: 0.01,
            lambda: 0.0,
            eta: 0.1,
            c0: None,
            convection: Convection::Centered,
            allow_cfl_violation: false,
            case: Case::Smooth(SmoothData::well_prepared()),
            tolerances: Tolerances::default(),
            out_dir: "out".into(),
            snapshot_every: 0,
            sweep_eps: vec![1e-1, 1e-2, 1e-3, 1e-4],
        }
    }
}

fn convection_name(c: Convection) -> &'static str {
    match c {
        Convection::Centered => "centered",
        Convection::Upwind => "upwind",
    }
}

fn parse_convection(s: &str) -> Result<Convection, String> {
    match s {
        "centered" => Ok(Convection::Centered),
        "upwind" => Ok(Convection::Upwind),
        _ => Err(format!("unknown convection '{s}' (expected centered or upwind)")),
    }
}

struct Parsed<T>(T);

impl FromStr for Parsed<Convection> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        parse_convection(s).map(Parsed)
    }
}

impl FromStr for Parsed<DtSpec> {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "mach_uniform" {
            return Ok(Parsed(DtSpec::MachUniform));
        }
        s.parse::<f64>().map(|v| Parsed(DtSpec::Fixed(v))).map_err(|_| format!("expected a number or 'mach_uniform', got '{s}'"))
    }
}

fn four(v: Vec<f64>, line: usize, what: &str) -> Result<[f64; 4], ConfigError> {
    v.try_into().map_err(|_| at(line, format!("{what} needs four numbers")))
}

fn two(v: Vec<f64>, line: usize, what: &str) -> Result<[f64; 2], ConfigError> {
    v.try_into().map_err(|_| at(line, format!("{what} needs two numbers")))
}

const SECTIONS: [&str; 7] = ["mesh", "scheme", "case", "case.vortex", "solver", "output", "sweep"];

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let ini = Ini::parse(text)?;
        if let Some((name, line)) = ini.headers.iter().find(|(n, _)| !SECTIONS.contains(&n.as_str())) {
            return Err(at(*line, format!("unknown section [{name}]")));
        }
        let sec = |name: &'static str| Section { name, map: ini.sections.get(name), used: Vec::new() };
        let d = RunConfig::default();

        let mut m = sec("mesh");
        let nx = m.or("nx", d.nx)?;
        let ny = m.or("ny", d.ny)?;
        let domain = match m.list("domain")? {
            Some(v) => Some(four(v, m.line("domain"), "domain")?),
            None => None,
        };
        m.finish()?;

        let mut s = sec("scheme");
        let kind = s.or("kind", d.kind)?;
        let dt = s.get::<Parsed<DtSpec>>("dt")?.map_or(d.dt, |p| p.0);
        let t_end_given = s.get::<f64>("t_end")?;
        let eps = s.or("eps", d.eps)?;
        let gamma = s.or("gamma", d.gamma)?;
        let mu = s.or("mu", d.mu)?;
        let lambda = s.or("lambda", d.lambda)?;
        let eta = s.or("eta", d.eta)?;
        let c0 = s.get::<f64>("c0")?;
        let convection = s.get::<Parsed<Convection>>("convection")?.map_or(d.convection, |p| p.0);
        let allow_cfl_violation = s.or("allow_cfl_violation", false)?;
        s.finish()?;

        let mut c = sec("case");
        let case_type: String = c.or("type", "smooth".to_string())?;
        let case_line = c.line("type");
        let mut data = SmoothData::well_prepared();
        data.rho_amp = c.or("rho_amp", data.rho_amp)?;
        data.rho_power = c.or("rho_power", data.rho_power)?;
        data.u_amp = c.or("u_amp", data.u_amp)?;
        data.div_amp = c.or("div_amp", data.div_amp)?;
        let seed = c.or("seed", 0u64)?;
        c.finish()?;

        let mut v = sec("case.vortex");
        let vd = VortexParams::default();
        let c_ms = v.list("c_m")?.unwrap_or_else(|| MACH_SET.to_vec());
        let mode = v.or::<ViscosityMode>("mode", vd.mode)?;
        let source_mode = v.or::<SourceMode>("source", vd.source_mode)?;
        let v_max = v.or("v_max", vd.v_max)?;
        let a = match v.list("a")? {
            Some(x) => two(x, v.line("a"), "a")?,
            None => vd.a,
        };
        let x0 = match v.list("x0")? {
            Some(x) => two(x, v.line("x0"), "x0")?,
            None => vd.x0,
        };
        let vortex_section = ini.sections.contains_key("case.vortex");
        v.finish()?;

        let is_vortex = case_type == "vortex";
        let t_end = t_end_given.unwrap_or(if is_vortex { vd.t_end } else { d.t_end });
        let case = match case_type.as_str() {
            "rest" => Case::Rest,
            "smooth" => Case::Smooth(data),
            "random" => Case::Random { seed },
            "vortex" => {
                let gamma_v = if ini.sections.get("scheme").is_some_and(|m| m.contains_key("gamma")) { gamma } else { vd.gamma };
                let params = VortexParams {
                    c_m: c_ms.first().copied().unwrap_or(vd.c_m),
                    gamma: gamma_v,
                    a,
                    x0,
                    domain: domain.unwrap_or(vd.domain),
                    t_end,
                    mode,
                    source_mode,
                    v_max,
                };
                Case::Vortex { params, c_ms }
            }
            other => return Err(at(case_line, format!("unknown case type '{other}' (expected rest, smooth, random or vortex)"))),
        };
        if vortex_section && !matches!(case, Case::Vortex { .. }) {
            return Err(at(ini.headers["case.vortex"], "[case.vortex] given but case type is not vortex"));
        }

        let mut so = sec("solver");
        let td = Tolerances::default();
        let tolerances = Tolerances {
            newton_rtol: so.or("newton_rtol", td.newton_rtol)?,
            newton_atol: so.or("newton_atol", td.newton_atol)?,
            newton_max_iter: so.or("newton_max_iter", td.newton_max_iter)?,
            outer_rtol: so.or("outer_rtol", td.outer_rtol)?,
            max_outer: so.or("max_outer", td.max_outer)?,
        };
        so.finish()?;

        let mut o = sec("output");
        let out_dir = o.or("dir", d.out_dir.clone())?;
        let snapshot_every = o.or("snapshot_every", d.snapshot_every)?;
        o.finish()?;

        let mut sw = sec("sweep");
        let sweep_eps = sw.list("eps")?.unwrap_or(d.sweep_eps.clone());
        sw.finish()?;

        let (domain, gamma) = match &case {
            Case::Vortex { params, .. } => (params.domain, params.gamma),
            _ => (domain.unwrap_or(d.domain), gamma),
        };
        let cfg = RunConfig {
            nx,
            ny,
            domain,
            kind,
            dt,
            t_end,
            eps,
            gamma,
            mu,
            lambda,
            eta,
            c0,
            convection,
            allow_cfl_violation,
            case,
            tolerances,
            out_dir,
            snapshot_every,
            sweep_eps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.nx == 0 || self.ny == 0 {
            return bad(format!("mesh must have at least one cell per direction (got {}x{})", self.nx, self.ny));
        }
        if let DtSpec::Fixed(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("dt must be positive (got {dt})"));
            }
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1) (got {})", self.eta));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive (got {})", self.eps));
        }
        if self.sweep_eps.iter().any(|e| !(*e > 0.0)) {
            return bad("sweep eps values must be positive".into());
        }
        if let Case::Vortex { params, c_ms } = &self.case {
            if self.nx != self.ny {
                return bad(format!("the vortex case needs a square grid (got {}x{})", self.nx, self.ny));
            }
            if self.dt == DtSpec::MachUniform {
                return bad("the vortex case needs a fixed dt".into());
            }
            if c_ms.is_empty() || c_ms.iter().any(|c| !(*c > 0.0)) {
                return bad("[case.vortex] c_m values must be positive".into());
            }
            params.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        if self.kind.is_incompressible() && matches!(self.case, Case::Vortex { .. }) {
            return bad("the vortex case needs a compressible scheme".into());
        }
        Ok(())
    }

    /// Smooth initial data of the smooth and random cases.
    pub fn smooth_data(&self) -> Option<SmoothData> {
        let mut d = match &self.case {
            Case::Smooth(d) => d.clone(),
            Case::Random { seed } => SmoothData::random(*seed),
            _ => return None,
        };
        d.domain = self.domain;
        Some(d)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, ConfigError> {
        let data = self.smooth_data().ok_or_else(|| ConfigError::Invalid(format!("sweep needs the smooth or random case, not {}", self.case.name())))?;
        if self.nx != self.ny {
            return Err(ConfigError::Invalid(format!("sweep needs a square grid (got {}x{})", self.nx, self.ny)));
        }
        let time_step = match self.dt {
            DtSpec::Fixed(dt) => TimeStep::Fixed(dt),
            DtSpec::MachUniform => TimeStep::MachUniform { eta: self.eta, c0: self.c0 },
        };
        Ok(SweepSpec {
            kind: self.kind,
            n: self.nx,
            gamma: self.gamma,
            mu: self.mu,
            lambda: self.lambda,
            t_end: self.t_end,
            time_step,
            convection: self.convection,
            data,
            tolerances: self.tolerances,
        })
    }

    /// The configuration with every default written out; parsing it back
    /// yields the same configuration.
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[mesh]\nnx = {}\nny = {}\ndomain = {}\n", self.nx, self.ny, list(&self.domain));
        let dt = match self.dt {
            DtSpec::Fixed(v) => format!("{v:?}"),
            DtSpec::MachUniform => "mach_uniform".into(),
        };
        let _ = writeln!(
            s,
            "[scheme]\nkind = {}\ndt = {dt}\nt_end = {:?}\neps = {:?}\ngamma = {:?}\nmu = {:?}\nlambda = {:?}\neta = {:?}",
            self.kind, self.t_end, self.eps, self.gamma, self.mu, self.lambda, self.eta
        );
        if let Some(c0) = self.c0 {
            let _ = writeln!(s, "c0 = {c0:?}");
        }
        let _ = writeln!(s, "convection = {}\nallow_cfl_violation = {}\n", convection_name(self.convection), self.allow_cfl_violation);
        let _ = writeln!(s, "[case]\ntype = {}", self.case.name());
        match &self.case {
            Case::Smooth(d) => {
                let _ = writeln!(s, "rho_amp = {:?}\nrho_power = {}\nu_amp = {:?}\ndiv_amp = {:?}", d.rho_amp, d.rho_power, d.u_amp, d.div_amp);
            }
            Case::Random { seed } => {
                let _ = writeln!(s, "seed = {seed}");
            }
            Case::Vortex { params, c_ms } => {
                let _ = writeln!(
                    s,
                    "\n[case.vortex]\nc_m = {}\nmode = {}\nsource = {}\nv_max = {:?}\na = {}\nx0 = {}",
                    list(c_ms),
                    params.mode,
                    match params.source_mode {
                        SourceMode::Discrete => "discrete",
                        SourceMode::Analytic => "analytic",
                    },
                    params.v_max,
                    list(&params.a),
                    list(&params.x0)
                );
            }
            Case::Rest => {}
        }
        let t = &self.tolerances;
        let _ = writeln!(
            s,
            "\n[solver]\nnewton_rtol = {:?}\nnewton_atol = {:?}\nnewton_max_iter = {}\nouter_rtol = {:?}\nmax_outer = {}\n",
            t.newton_rtol, t.newton_atol, t.newton_max_iter, t.outer_rtol, t.max_outer
        );
        let _ = writeln!(s, "[output]\ndir = {}\nsnapshot_every = {}\n", self.out_dir, self.snapshot_every);
        let _ = writeln!(s, "[sweep]\neps = {}", list(&self.sweep_eps));
        s
    }
}
