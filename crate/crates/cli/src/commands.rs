use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chirp_mix::effham::{coupling_integrals, periods_to_pi};
use chirp_mix::propagate::mixing_buildup;
use chirp_mix::scan::{bandwidth_summary, offset_scan, BandwidthSummary, ScanConfig};
use chirp_mix::verify::{run_checks, VerifyConfig};
use chirp_mix::waveform::{chirp, supercycle, ChirpParams, PulseWaveform, ADIABATIC_RATIO_LIMIT};
use chirp_mix::Error;
use serde::Serialize;

use crate::config::{ConfigError, Loaded, Mixing};

pub enum Failure {
    /// Exit code 2.
    Config(ConfigError),
    /// Exit code 1: a check failed or the computation could not finish.
    Run(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

pub struct Context {
    pub cfg: Loaded,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub force: bool,
}

impl Context {
    fn provenance(&self) -> String {
        format!(
            "# chirpmix {} config-sha256={}",
            env!("CARGO_PKG_VERSION"),
            self.cfg.hash()
        )
    }

    fn create(&self, name: &str) -> Result<(PathBuf, BufWriter<File>), Failure> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| Failure::Run(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        let file =
            File::create(&path).map_err(|e| Failure::Run(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "{}", self.provenance())?;
        Ok((path, w))
    }

    fn write_data(
        &self,
        name: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<PathBuf, Failure> {
        let (path, mut w) = self.create(name)?;
        body(&mut w)?;
        w.flush()?;
        Ok(path)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf, Failure> {
        self.write_data(name, |w| w.write_all(text.as_bytes()))
    }

    /// Writes the summary next to the data and echoes it on stdout.
    fn summary(&self, name: &str, summary: &impl Serialize) -> Result<(), Failure> {
        let text = toml::to_string(summary).expect("summary serializes");
        self.write_text(name, &text)?;
        print!("{text}");
        Ok(())
    }

    fn chirp_params(&self) -> Result<ChirpParams, Failure> {
        let p = self.cfg.chirp_params()?;
        let ratio = p.adiabaticity_ratio();
        if ratio > 1.0 && !self.force {
            return Err(self
                .cfg
                .invalid(
                    "chirp.omega1_sq_over",
                    format!(
                        "adiabaticity ratio a/omega1^2 = {ratio:.3} exceeds 1; \
                         pass --force to run anyway"
                    ),
                )
                .into());
        }
        if ratio > ADIABATIC_RATIO_LIMIT {
            eprintln!(
                "warning: adiabaticity ratio a/omega1^2 = {ratio:.3} is above \
                 {ADIABATIC_RATIO_LIMIT}; the sweep is not adiabatic"
            );
        }
        Ok(p)
    }

    fn sweep(&self, p: &ChirpParams) -> Result<PulseWaveform, Failure> {
        let dwell = self.cfg.dwell()?;
        chirp(p, dwell).map_err(|e| self.cfg.invalid("chirp.dwell_us", e).into())
    }

    /// One cycle of the configured mixing sequence.
    fn mixing_cycle(
        &self,
        p: &ChirpParams,
        kind: Mixing,
    ) -> Result<(PulseWaveform, String), Failure> {
        match kind {
            Mixing::Chirp => Ok((supercycle(&self.sweep(p)?), "chirp".to_string())),
            Mixing::Composite => {
                let table = self.cfg.composite_table()?;
                let w = table
                    .waveform(p.rf_amplitude, self.cfg.dwell()?)
                    .map_err(|e| self.cfg.invalid("sequence.composite", e))?;
                Ok((w, table.name))
            }
        }
    }
}

fn run_error(e: Error) -> Failure {
    Failure::Run(e.to_string())
}

#[derive(Serialize)]
struct WaveformSummary {
    sweep_time_ms: f64,
    supercycle_time_ms: f64,
    adiabaticity_ratio: f64,
    dwell_us: f64,
    samples: usize,
    n_supercycles: usize,
    total_mixing_time_ms: f64,
    file: String,
}

pub fn waveform(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.chirp_params()?;
    let w = ctx.sweep(&p)?;
    let sc = supercycle(&w);
    let path = ctx.write_data("waveform.csv", |out| sc.write_csv(out))?;
    let n = ctx.cfg.config.schedule.n_supercycles;
    ctx.summary(
        "waveform_summary.toml",
        &WaveformSummary {
            sweep_time_ms: w.duration() * 1e3,
            supercycle_time_ms: sc.duration() * 1e3,
            adiabaticity_ratio: p.adiabaticity_ratio(),
            dwell_us: sc.dwell * 1e6,
            samples: sc.len(),
            n_supercycles: n,
            total_mixing_time_ms: n as f64 * sc.duration() * 1e3,
            file: file_name(&path),
        },
    )
}

#[derive(Serialize)]
struct EtaSummary {
    nu_i_khz: f64,
    nu_s_khz: f64,
    coupling_hz: f64,
    sweep_time_ms: f64,
    eta_final: f64,
    dq_max: f64,
    /// Centre of the fastest-growing T/20 window, in units of T.
    steepest_growth_over_t: Option<f64>,
    periods_to_pi: Option<u64>,
    predicted_time_ms: Option<f64>,
    file: String,
}

pub fn eta(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.chirp_params()?;
    let dwell = ctx.cfg.dwell()?;
    // same phase-step guard as the sampled sweep
    ctx.sweep(&p)?;
    let sys = ctx.cfg.spin_system()?;
    let ci = coupling_integrals(&p, &sys, dwell).map_err(run_error)?;
    let path = ctx.write_data("eta.csv", |out| ci.write_csv(out))?;
    let t = p.duration();
    let to_pi = periods_to_pi(ci.eta_final(), t).ok();
    let spins = &ctx.cfg.config.spins;
    ctx.summary(
        "eta_summary.toml",
        &EtaSummary {
            nu_i_khz: spins.nu_i_khz,
            nu_s_khz: spins.nu_s_khz,
            coupling_hz: spins.j_hz,
            sweep_time_ms: t * 1e3,
            eta_final: ci.eta_final(),
            dq_max: ci.dq_max(),
            steepest_growth_over_t: ci
                .steepest_growth_time(t / 20.0)
                .filter(|_| ci.eta_final() > 0.0)
                .map(|x| x / t),
            periods_to_pi: to_pi.map(|(n, _)| n),
            predicted_time_ms: to_pi.map(|(_, time)| time * 1e3),
            file: file_name(&path),
        },
    )
}

#[derive(Serialize)]
struct BuildupSummary {
    sequence: String,
    cycle_time_ms: f64,
    n_supercycles: usize,
    total_mixing_time_ms: f64,
    curve: Vec<CurveSummary>,
}

#[derive(Serialize)]
struct CurveSummary {
    nu_i_khz: f64,
    nu_s_khz: f64,
    max_efficiency: f64,
    max_at_ms: f64,
    /// First mixing time with efficiency above 0.95, in units of 1/J.
    first_above_095_over_j: Option<f64>,
    file: String,
}

pub fn buildup(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.chirp_params()?;
    let (cycle, name) = ctx.mixing_cycle(&p, ctx.cfg.config.sequence.mixing)?;
    let n = ctx.cfg.config.schedule.n_supercycles;
    let j = ctx.cfg.config.spins.j_hz;
    let mut curves = Vec::new();
    for (k, (nu_i, nu_s)) in ctx.cfg.buildup_pairs().into_iter().enumerate() {
        let sys = ctx.cfg.pair(nu_i, nu_s, "schedule.pairs_khz")?;
        let curve = mixing_buildup(&sys, &cycle, n);
        let file = format!("buildup_{}_I{}_S{}.csv", k + 1, nu_i, nu_s);
        let path = ctx.write_data(&file, |out| curve.write_csv(out))?;
        let (at, best) = curve.max();
        curves.push(CurveSummary {
            nu_i_khz: nu_i,
            nu_s_khz: nu_s,
            max_efficiency: best,
            max_at_ms: at * 1e3,
            first_above_095_over_j: curve.first_crossing(0.95).map(|t| t * j),
            file: file_name(&path),
        });
    }
    ctx.summary(
        "buildup_summary.toml",
        &BuildupSummary {
            sequence: name,
            cycle_time_ms: cycle.duration() * 1e3,
            n_supercycles: n,
            total_mixing_time_ms: n as f64 * cycle.duration() * 1e3,
            curve: curves,
        },
    )
}

#[derive(Serialize)]
struct ScanSummary {
    chirp: MapSummary,
    composite: MapSummary,
    chirp_band_wider: bool,
}

#[derive(Serialize)]
struct MapSummary {
    sequence: String,
    file: String,
    #[serde(flatten)]
    band: BandwidthSummary,
}

pub fn scan(ctx: &Context) -> Result<(), Failure> {
    let p = ctx.chirp_params()?;
    let s = &ctx.cfg.config.scan;
    let j = ctx.cfg.config.spins.j_hz;
    if !(j > 0.0) {
        return Err(ctx
            .cfg
            .invalid(
                "spins.J_hz",
                "the scan budget is measured in 1/J; J must be positive",
            )
            .into());
    }
    if s.grid < 2 {
        return Err(ctx
            .cfg
            .invalid(
                "scan.grid",
                format!("need at least 2 points, got {}", s.grid),
            )
            .into());
    }
    for (key, v) in [
        ("scan.range_khz", s.range_khz),
        ("scan.budget_over_J", s.budget_over_j),
        ("scan.separation_cap_khz", s.separation_cap_khz),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ctx
                .cfg
                .invalid(key, format!("must be positive, got {v}"))
                .into());
        }
    }
    if !(s.threshold > 0.0 && s.threshold < 1.0) {
        return Err(ctx
            .cfg
            .invalid("scan.threshold", "must lie in (0, 1)")
            .into());
    }
    if ctx.jobs == Some(0) {
        return Err(ConfigError("--jobs must be at least 1".into()).into());
    }

    let mut parts = Vec::new();
    for (kind, stem) in [
        (Mixing::Chirp, "map_chirp"),
        (Mixing::Composite, "map_composite"),
    ] {
        let (sequence, name) = ctx.mixing_cycle(&p, kind)?;
        let cfg = ScanConfig {
            nu_min: -s.range_khz * 1e3,
            nu_max: s.range_khz * 1e3,
            grid_points: s.grid,
            coupling_hz: j,
            time_budget: s.budget_over_j / j,
            sequence,
            description: name.clone(),
        };
        eprintln!(
            "scanning {name}: {0}x{0} offsets, up to {1} cycles each",
            s.grid,
            cfg.max_cycles()
        );
        let started = std::time::Instant::now();
        let map = offset_scan(&cfg, ctx.jobs).map_err(|e| match e {
            Error::SequenceExceedsBudget { .. } => {
                Failure::Config(ctx.cfg.invalid("scan.budget_over_J", e))
            }
            e => run_error(e),
        })?;
        eprintln!("scanned {name} in {:.1} s", started.elapsed().as_secs_f64());
        let path = ctx.write_data(&format!("{stem}.csv"), |out| map.write_csv(out))?;
        ctx.write_text(&format!("{stem}.toml"), &map.metadata_toml())?;
        let band =
            bandwidth_summary(&map, s.threshold, s.separation_cap_khz * 1e3).map_err(run_error)?;
        parts.push(MapSummary {
            sequence: name,
            file: file_name(&path),
            band,
        });
    }
    let composite = parts.pop().expect("two maps");
    let chirp = parts.pop().expect("two maps");
    ctx.summary(
        "scan_summary.toml",
        &ScanSummary {
            chirp_band_wider: chirp.band.half_width_hz > composite.band.half_width_hz,
            chirp,
            composite,
        },
    )
}

pub fn verify(ctx: &Context) -> Result<(), Failure> {
    // The checks are meant to catch bad parameters, so only the hard refusal applies.
    let params = ctx.chirp_params()?;
    let cfg = VerifyConfig {
        params,
        dwell: ctx.cfg.dwell()?,
        system: ctx.cfg.spin_system()?,
        n_supercycles: ctx.cfg.config.schedule.n_supercycles,
        composite: ctx.cfg.composite_table()?,
    };
    let report = run_checks(&cfg);
    let text = report.to_toml();
    ctx.write_text("verify_report.toml", &text)?;
    print!("{text}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Run(format!(
            "failed checks: {}",
            report.failures().join(", ")
        )))
    }
}

pub fn show_config(ctx: &Context) -> Result<(), Failure> {
    println!("{}", ctx.provenance());
    print!("{}", ctx.cfg.to_toml());
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}
