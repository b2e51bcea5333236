use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context as _, Result};
use serde::Serialize;

use esc_core::bench::{build_plant, PLANT_NAMES};
use esc_core::continuation::{
    condition_scale, sweep_diagram, Chart, PlantCondition, SweepOptions, TraceOptions,
};
use esc_core::export::{
    branch_table, equilibrium_table, num, stationary_table, trajectory_table, zero_scan_table, CsvTable, OrbitSummary,
};
use esc_core::freq::EscConfig;
use esc_core::plant::{equilibrium_at, equilibrium_map, PlantModel};
use esc_core::stationarity::{
    condition_value, find_stationary_points, uniform_grid, Stability, StabilitySource, DEFAULT_GRID, ROOT_TOL,
};
use esc_core::timesim::{
    floquet_stability, integrate, label_stationary_points, shoot_orbit, ClosedLoopSystem, FloquetVerdict,
    ShootingOptions, SimOptions, SAMPLES_PER_PERIOD,
};
use esc_core::zeros::zero_crossing_scan;

use crate::config::{
    parse_grid, parse_interval, BranchSection, Echo, EscEcho, EscSection, FileConfig, GridSection, SimulateSection,
    StationarySection,
};
use crate::{Command, Common, UsageError};

const DEFAULT_OMEGA_RANGE: (f64, f64) = (0.01, 0.8);
const DEFAULT_MAP_POINTS: usize = 401;
const DEFAULT_PERIODS: usize = 100;

struct Setup {
    plant_name: String,
    params: BTreeMap<String, f64>,
    plant: Box<dyn PlantModel>,
    esc: EscConfig,
    output: Option<PathBuf>,
}

impl Setup {
    fn header<S: Serialize>(&self, command: &str, options: &S) -> Result<CsvTable> {
        let echo = Echo {
            command,
            plant: &self.plant_name,
            params: &self.params,
            esc: EscEcho::new(&self.esc),
            options,
        };
        let text = toml::to_string(&echo).context("serializing the configuration echo")?;
        let mut t = CsvTable::default();
        t.comment(format!("esc {}", env!("CARGO_PKG_VERSION")));
        for line in text.lines() {
            t.comment(line);
        }
        t.comment("");
        Ok(t)
    }

    fn emit(&self, header: CsvTable, body: CsvTable) -> Result<()> {
        let table = CsvTable { comments: [header.comments, body.comments].concat(), columns: body.columns, rows: body.rows };
        match &self.output {
            Some(path) => {
                let f = File::create(path).map_err(|e| UsageError(format!("cannot create {}: {e}", path.display())))?;
                let mut w = BufWriter::new(f);
                table.write_to(&mut w)?;
                w.flush()?;
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                table.write_to(&mut w)?;
                w.flush()?;
            }
        }
        Ok(())
    }

    fn domain_grid(&self, range: Option<&str>, default_n: usize) -> Result<(f64, f64, usize)> {
        Ok(match range {
            Some(s) => parse_grid(s)?,
            None => {
                let (lo, hi) = self.plant.input_domain();
                (lo, hi, default_n)
            }
        })
    }

    fn require_valid_esc(&self) -> Result<()> {
        self.esc.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(())
    }
}

fn setup(common: &Common, file: &FileConfig) -> Result<Setup> {
    let plant_name = common
        .plant
        .clone()
        .or_else(|| file.plant.clone())
        .ok_or_else(|| UsageError(format!("no plant given; use --plant with one of {}", PLANT_NAMES.join(", "))))?;
    let mut params = file.params.clone();
    for (k, v) in &common.params {
        params.insert(k.clone(), *v);
    }
    let overrides: Vec<(String, f64)> = params.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let plant = build_plant(&plant_name, &overrides).map_err(|e| UsageError(e.to_string()))?;
    let flags = EscSection {
        omega: common.omega,
        omega_h: common.omega_h,
        omega_l: common.omega_l,
        omega_ratio: common.omega_ratio,
        gain: common.gain,
        amplitude: common.amplitude,
    };
    let esc = file.esc.overlay(&flags).resolve();
    let output = common.output.clone().or_else(|| file.output.clone());
    Ok(Setup { plant_name, params, plant, esc, output })
}

pub fn run(common: Common, command: Command) -> Result<()> {
    let file = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let s = setup(&common, &file)?;
    match command {
        Command::Equilibrium { u_range } => {
            let opts = GridSection { u_range: u_range.or(file.equilibrium.u_range) };
            equilibrium(&s, &opts)
        }
        Command::Stationary { u_range, floquet } => {
            let opts = StationarySection {
                u_range: u_range.or(file.stationary.u_range),
                floquet: if floquet { Some(true) } else { file.stationary.floquet },
            };
            stationary(&s, &opts)
        }
        Command::Branch { omega_range, u_range, seeds, grid, step } => {
            let f = file.branch;
            let opts = BranchSection {
                omega_range: omega_range.or(f.omega_range),
                u_range: u_range.or(f.u_range),
                seeds: seeds.or(f.seeds),
                grid: grid.or(f.grid),
                step: step.or(f.step),
            };
            branch(&s, &opts)
        }
        Command::Simulate { u0, periods, shoot, rtol, atol, summary } => {
            let f = file.simulate;
            let opts = SimulateSection {
                u0: u0.or(f.u0),
                periods: periods.or(f.periods),
                shoot: if shoot { Some(true) } else { f.shoot },
                rtol: rtol.or(f.rtol),
                atol: atol.or(f.atol),
                summary: summary.or(f.summary),
            };
            simulate(&s, &opts)
        }
        Command::Zeros { u_range } => {
            let opts = GridSection { u_range: u_range.or(file.zeros.u_range) };
            zeros(&s, &opts)
        }
    }
}

fn equilibrium(s: &Setup, opts: &GridSection) -> Result<()> {
    let (lo, hi, n) = s.domain_grid(opts.u_range.as_deref(), DEFAULT_MAP_POINTS)?;
    let map = equilibrium_map(s.plant.as_ref(), &uniform_grid(lo, hi, n))?;
    s.emit(s.header("equilibrium", opts)?, equilibrium_table(&map))
}

fn stationary(s: &Setup, opts: &StationarySection) -> Result<()> {
    s.require_valid_esc()?;
    let plant = s.plant.as_ref();
    let (lo, hi, n) = s.domain_grid(opts.u_range.as_deref(), DEFAULT_GRID)?;
    let mut points = find_stationary_points(plant, &s.esc, (lo, hi), n)?;
    let failures = label_stationary_points(plant, &s.esc, &mut points);

    let mut notes = Vec::new();
    for (p, e) in points.iter().zip(&failures) {
        if p.degenerate {
            notes.push(format!("u = {}: linearized response is degenerate (|G| = {:e})", num(p.u_bar), p.response_magnitude));
        }
        if let Some(e) = e {
            notes.push(format!("u = {}: reduced model: {e}", num(p.u_bar)));
        }
    }
    if opts.floquet == Some(true) {
        let sys = ClosedLoopSystem::new(plant, s.esc)?;
        let shooting = ShootingOptions::default();
        for p in points.iter_mut() {
            let orbit = sys.rest_state(p.u_bar).and_then(|z| shoot_orbit(&sys, z.as_slice(), &shooting));
            match orbit {
                Ok(o) => {
                    let rep = floquet_stability(&o);
                    let reduced = p.stability;
                    p.stability = match rep.verdict {
                        FloquetVerdict::Stable => Stability::Stable,
                        FloquetVerdict::Unstable => Stability::Unstable,
                        FloquetVerdict::Marginal => Stability::Unknown,
                    };
                    p.stability_source = StabilitySource::Floquet;
                    notes.push(format!(
                        "u = {}: orbit mean input {}, max |mu| = {}, reduced model says {}{}",
                        num(p.u_bar),
                        num(o.mean_input),
                        num(rep.max_modulus),
                        reduced.as_str(),
                        if rep.period_doubling { ", period doubling" } else { "" }
                    ));
                }
                Err(e) => notes.push(format!("u = {}: shooting failed: {e}", num(p.u_bar))),
            }
        }
    }
    let count = |st: Stability| points.iter().filter(|p| p.stability == st).count();
    notes.push(format!(
        "{} points: {} stable, {} unstable, {} unknown",
        points.len(),
        count(Stability::Stable),
        count(Stability::Unstable),
        count(Stability::Unknown)
    ));
    let mut body = stationary_table(&points);
    body.comments = notes;
    s.emit(s.header("stationary", opts)?, body)
}

fn branch(s: &Setup, opts: &BranchSection) -> Result<()> {
    s.require_valid_esc()?;
    let plant = s.plant.as_ref();
    let omega_range = match &opts.omega_range {
        Some(r) => parse_interval(r)?,
        None => DEFAULT_OMEGA_RANGE,
    };
    if !(omega_range.0 > 0.0) {
        return Err(UsageError("omega range must be positive".into()).into());
    }
    let (lo, hi) = match &opts.u_range {
        Some(r) => parse_interval(r)?,
        None => plant.input_domain(),
    };
    let surface = PlantCondition::new(plant, s.esc).with_domain(lo, hi).map_err(|e| UsageError(e.to_string()))?;
    let chart = if lo > 0.0 { Chart::Logarithmic } else { Chart::Linear };
    let grid = opts.grid.unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return Err(UsageError("grid needs at least 2 points".into()).into());
    }
    let reference = s.esc.omega.clamp(omega_range.0, omega_range.1);
    let scale = condition_scale(&surface, reference, (lo, hi), grid, chart)?;
    let tolerance = ROOT_TOL * if scale > 0.0 { scale } else { 1.0 };
    let sweep = SweepOptions {
        omega_range,
        seed_omegas: opts.seeds.unwrap_or(12),
        scan_grid: grid,
        trace: TraceOptions { step: opts.step.unwrap_or(0.02), tolerance, chart },
    };
    let diagram = sweep_diagram(&surface, sweep)?;

    let mut body = branch_table(&diagram, s.esc.gain, |u| equilibrium_at(plant, u).ok().map(|e| e.output(plant)));
    for (i, b) in diagram.branches.iter().enumerate() {
        body.comment(format!("branch {i}: {} points, ends {:?} / {:?}", b.points.len(), b.ends.0, b.ends.1));
    }
    for (i, f) in diagram.folds() {
        body.comment(format!(
            "fold on branch {i}: omega = {}, u = {}{}",
            num(f.omega),
            num(f.u_bar),
            if f.degenerate { " (degenerate)" } else { "" }
        ));
    }
    s.emit(s.header("branch", opts)?, body)
}

fn simulate(s: &Setup, opts: &SimulateSection) -> Result<()> {
    let plant = s.plant.as_ref();
    let open = s.esc.gain == 0.0 || s.esc.amplitude == 0.0;
    let sys = if open {
        // k = 0 or a = 0 is a legitimate open-loop run; check everything else.
        EscConfig { gain: 1.0, amplitude: 1.0, ..s.esc }.validate().map_err(|e| UsageError(e.to_string()))?;
        ClosedLoopSystem::open_loop(plant, s.esc)
    } else {
        s.require_valid_esc()?;
        ClosedLoopSystem::new(plant, s.esc)?
    };
    let (lo, hi) = plant.input_domain();
    let u0 = opts.u0.unwrap_or(0.5 * (lo + hi));
    let periods = opts.periods.unwrap_or(DEFAULT_PERIODS);
    let defaults = SimOptions::default();
    let sim = SimOptions {
        rtol: opts.rtol.unwrap_or(defaults.rtol),
        atol: opts.atol.unwrap_or(defaults.atol),
        samples_per_period: SAMPLES_PER_PERIOD,
    };
    if !(lo..=hi).contains(&u0) {
        return Err(UsageError(format!("u0 = {u0} outside input domain [{lo}, {hi}]")).into());
    }
    let z0 = sys.rest_state(u0)?;
    let traj = integrate(&sys, z0.as_slice(), (0.0, periods as f64 * sys.period()), &sim)
        .map_err(|e| match e {
            esc_core::EscError::InvalidInput(m) => anyhow::Error::new(UsageError(m)),
            e => e.into(),
        })?;

    let mut body = trajectory_table(&traj.rows(&sys));
    if opts.shoot == Some(true) {
        let orbit = shoot_orbit(&sys, traj.final_state(), &ShootingOptions::default())?;
        let rep = floquet_stability(&orbit);
        let c = condition_value(plant, &s.esc, orbit.mean_input)?.abs();
        let surface = PlantCondition::new(plant, s.esc);
        let scale = condition_scale(&surface, s.esc.omega, (lo, hi), DEFAULT_GRID, Chart::Linear)?;
        let summary = OrbitSummary::new(&orbit, c, scale, rep);
        body.comment(format!("orbit: {}", summary.to_json_line()));
        if let Some(path) = &opts.summary {
            std::fs::write(path, summary.to_json() + "\n")
                .map_err(|e| UsageError(format!("cannot write {}: {e}", path.display())))?;
        }
    }
    s.emit(s.header("simulate", opts)?, body)
}

fn zeros(s: &Setup, opts: &GridSection) -> Result<()> {
    let plant = s.plant.as_ref();
    let (lo, hi, n) = s.domain_grid(opts.u_range.as_deref(), DEFAULT_MAP_POINTS)?;
    let scan = zero_crossing_scan(plant, &uniform_grid(lo, hi, n)).map_err(|e| match e {
        esc_core::EscError::InvalidInput(m) => anyhow::Error::new(UsageError(m)),
        e => e.into(),
    })?;
    let mut body = zero_scan_table(&scan);
    for r in &scan.rows {
        if r.degenerate {
            body.comment(format!("u = {}: DegenerateResponse, G is identically zero", num(r.u)));
        } else if r.ambiguous {
            body.comment(format!("u = {}: crossing zero ambiguous", num(r.u)));
        }
    }
    for &i in &scan.zero_sign_changes {
        body.comment(format!("crossing zero changes sign in [{}, {}]", num(scan.rows[i].u), num(scan.rows[i + 1].u)));
    }
    for &i in &scan.gain_sign_changes {
        body.comment(format!("G(0) changes sign in [{}, {}]", num(scan.rows[i].u), num(scan.rows[i + 1].u)));
    }
    s.emit(s.header("zeros", opts)?, body)
}
