//! Seeded trajectory datasets: `traj_%04d.fld` files plus a `manifest`.
//!
//! Trajectory `i` draws all its randomness from the stream `solver/{i}`, so parallel
//! and serial generation write identical bytes.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::kolmogorov::{gaussian_random_vorticity, solve_kolmogorov, KolmogorovConfig};
use super::kse::{kse_random_initial, solve_kse, KseConfig};
use super::swe::{solve_swe_flood, synthetic_dem, SweConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::spectral::{fld, Axis, FldTensor, GridSpec, RealField};
use rand::Rng;

pub const MANIFEST: &str = "manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Kse,
    Kolmogorov,
    Swe,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kse" => Ok(DatasetKind::Kse),
            "kolmogorov" => Ok(DatasetKind::Kolmogorov),
            "swe" => Ok(DatasetKind::Swe),
            other => Err(Error::Usage(format!(
                "unknown dataset kind '{other}' (expected kse|kolmogorov|swe)"
            ))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Kse => "kse",
            DatasetKind::Kolmogorov => "kolmogorov",
            DatasetKind::Swe => "swe",
        })
    }
}

/// Synthetic flood scenarios: random terrain and a random uniform storm.
#[derive(Debug, Clone, PartialEq)]
pub struct SweDatasetConfig {
    pub n: usize,
    pub dx: f64,
    pub manning: f64,
    pub duration: f64,
    pub record_interval: f64,
    /// Storm rate drawn from this range (m/s), falling over `[0, rain_duration)`.
    pub rain_range: (f64, f64),
    pub rain_duration: f64,
}

impl Default for SweDatasetConfig {
    fn default() -> Self {
        SweDatasetConfig {
            n: 32,
            dx: 30.0,
            manning: 0.035,
            duration: 6.0 * 3600.0,
            record_interval: 300.0,
            rain_range: (5e-6, 3e-5),
            rain_duration: 3.0 * 3600.0,
        }
    }
}

/// Per-kind solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub kse: KseConfig,
    pub kse_vary_nu: bool,
    pub kolmogorov: KolmogorovConfig,
    pub swe: SweDatasetConfig,
}

impl DatasetSpec {
    pub fn new(kind: DatasetKind) -> Self {
        DatasetSpec {
            kind,
            kse: KseConfig::default(),
            kse_vary_nu: false,
            kolmogorov: KolmogorovConfig::default(),
            swe: SweDatasetConfig::default(),
        }
    }
}

/// One manifest stanza.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryMeta {
    pub file: String,
    pub stream: String,
    pub seed: u64,
    /// Spatial extent of every spatial axis.
    pub length: f64,
    /// Time between recorded frames.
    pub dt: f64,
    pub nu: f64,
    pub n: usize,
    pub warmup: usize,
    /// Recorded frames.
    pub steps: usize,
    /// Kind-specific keys (channel names, storm rate, ...).
    pub extra: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub kind: DatasetKind,
    pub entries: Vec<TrajectoryMeta>,
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind);
        let _ = writeln!(s, "count = {}", self.entries.len());
        for e in &self.entries {
            s.push('\n');
            let _ = writeln!(s, "file = {}", e.file);
            let _ = writeln!(s, "stream = {}", e.stream);
            let _ = writeln!(s, "seed = {}", e.seed);
            let _ = writeln!(s, "L = {}", e.length);
            let _ = writeln!(s, "dt = {}", e.dt);
            let _ = writeln!(s, "nu = {}", e.nu);
            let _ = writeln!(s, "N = {}", e.n);
            let _ = writeln!(s, "warmup = {}", e.warmup);
            let _ = writeln!(s, "steps = {}", e.steps);
            for (k, v) in &e.extra {
                let _ = writeln!(s, "{k} = {v}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut stanzas: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                if !stanzas.last().unwrap().is_empty() {
                    stanzas.push(Vec::new());
                }
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("manifest line {}: expected 'key = value'", ln + 1)))?;
            stanzas.last_mut().unwrap().push((k.trim().to_string(), v.trim().to_string()));
        }
        stanzas.retain(|s| !s.is_empty());
        let mut it = stanzas.into_iter();
        let header = it.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
        let get = |st: &[(String, String)], key: &str| -> Result<String> {
            st.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| Error::Format(format!("manifest stanza lacks '{key}'")))
        };
        fn num<T: FromStr>(v: String, key: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Format(format!("manifest key '{key}': bad value '{v}'")))
        }
        let kind: DatasetKind = get(&header, "kind")?.parse().map_err(|_| Error::Format("bad dataset kind".into()))?;
        let count: usize = num(get(&header, "count")?, "count")?;
        const CORE: [&str; 9] = ["file", "stream", "seed", "L", "dt", "nu", "N", "warmup", "steps"];
        let mut entries = Vec::new();
        for st in it {
            entries.push(TrajectoryMeta {
                file: get(&st, "file")?,
                stream: get(&st, "stream")?,
                seed: num(get(&st, "seed")?, "seed")?,
                length: num(get(&st, "L")?, "L")?,
                dt: num(get(&st, "dt")?, "dt")?,
                nu: num(get(&st, "nu")?, "nu")?,
                n: num(get(&st, "N")?, "N")?,
                warmup: num(get(&st, "warmup")?, "warmup")?,
                steps: num(get(&st, "steps")?, "steps")?,
                extra: st.iter().filter(|(k, _)| !CORE.contains(&k.as_str())).cloned().collect(),
            });
        }
        if entries.len() != count {
            return Err(Error::Format(format!(
                "manifest declares {count} trajectories but lists {}",
                entries.len()
            )));
        }
        Ok(Manifest { kind, entries })
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let path = dir.as_ref().join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Manifest::parse(&text)
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let path = dir.as_ref().join(MANIFEST);
        std::fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }
}

pub fn trajectory_file(i: usize) -> String {
    format!("traj_{i:04}.fld")
}

/// Run one trajectory; returns its field on a `(t, space...)` grid and its stanza.
pub fn generate_trajectory(spec: &DatasetSpec, seed: u64, index: usize) -> Result<(RealField, TrajectoryMeta)> {
    let stream = format!("solver/{index}");
    let mut r = rng::stream(seed, &stream);
    let meta = |length, dt, nu, n, warmup, steps, extra| TrajectoryMeta {
        file: trajectory_file(index),
        stream: stream.clone(),
        seed,
        length,
        dt,
        nu,
        n,
        warmup,
        steps,
        extra,
    };
    match spec.kind {
        DatasetKind::Kse => {
            let cfg = KseConfig::sample(&spec.kse, spec.kse_vary_nu, &mut r);
            let u0 = kse_random_initial(cfg.n, cfg.length, &mut r);
            let traj = solve_kse(&cfg, &u0)?;
            let extra = vec![
                ("channels".to_string(), "u".to_string()),
                ("substeps".to_string(), cfg.substeps.to_string()),
                ("init".to_string(), "sines10".to_string()),
            ];
            Ok((traj, meta(cfg.length, cfg.dt, cfg.nu, cfg.n, cfg.warmup, cfg.steps, extra)))
        }
        DatasetKind::Kolmogorov => {
            let cfg = &spec.kolmogorov;
            let w0 = gaussian_random_vorticity(&cfg.grid()?, cfg.init_tau, cfg.init_alpha, &mut r)?;
            let out = solve_kolmogorov(cfg, &w0)?;
            let frames: Vec<RealField> = out
                .vorticity
                .iter()
                .zip(&out.velocity)
                .map(|(w, u)| RealField::stack(&[w, u]))
                .collect::<Result<_>>()?;
            let frame_dt = cfg.dt * cfg.record_every as f64;
            let field = stack_in_time(&frames, frame_dt)?;
            let extra = vec![
                ("channels".to_string(), "w,u_x,u_y".to_string()),
                ("solver_dt".to_string(), cfg.dt.to_string()),
                ("forcing".to_string(), cfg.forcing_amplitude.to_string()),
                ("init_tau".to_string(), cfg.init_tau.to_string()),
                ("init_alpha".to_string(), cfg.init_alpha.to_string()),
            ];
            Ok((field, meta(1.0, frame_dt, cfg.nu, cfg.n, cfg.warmup, cfg.frames, extra)))
        }
        DatasetKind::Swe => {
            let d = &spec.swe;
            let rate = r.random_range(d.rain_range.0..=d.rain_range.1);
            let cfg = SweConfig {
                dem: synthetic_dem(d.n, d.n, d.dx, &mut r),
                manning: d.manning,
                rainfall: vec![(0.0, rate), (d.rain_duration, 0.0)],
                duration: d.duration,
                record_interval: d.record_interval,
                ..SweConfig::flat(d.n, d.n, d.dx)
            };
            let run = solve_swe_flood(&cfg, None)?;
            let frames = run.times.len();
            let extra = vec![
                ("channels".to_string(), "h".to_string()),
                ("manning".to_string(), d.manning.to_string()),
                ("rain".to_string(), rate.to_string()),
                ("rain_duration".to_string(), d.rain_duration.to_string()),
            ];
            Ok((run.depth, meta(d.n as f64 * d.dx, d.record_interval, 0.0, d.n, 0, frames, extra)))
        }
    }
}

/// Stack equally shaped frames along a new leading time axis.
pub fn stack_in_time(frames: &[RealField], dt: f64) -> Result<RealField> {
    let first = frames.first().ok_or_else(|| Error::Shape("no frames".into()))?;
    let mut axes = vec![Axis::temporal("t", frames.len(), frames.len() as f64 * dt)];
    axes.extend(first.grid().axes().iter().cloned());
    let grid = GridSpec::new(axes)?;
    let ch = first.channels();
    let n = first.points();
    let mut data = vec![0.0; ch * frames.len() * n];
    for (t, f) in frames.iter().enumerate() {
        f.check_same_shape(first, "time stacking")?;
        for c in 0..ch {
            data[c * frames.len() * n + t * n..c * frames.len() * n + (t + 1) * n].copy_from_slice(f.channel(c));
        }
    }
    RealField::new(grid, ch, data)
}

/// Split a `(t, space...)` field into its frames.
pub fn split_in_time(field: &RealField) -> Result<Vec<RealField>> {
    let t_axis = field.grid().temporal_axis();
    if t_axis != Some(0) {
        return Err(Error::Shape("expected a leading temporal axis".into()));
    }
    let grid = field.grid().drop_axis(0)?;
    let steps = field.grid().axes()[0].size;
    let n = grid.len();
    let ch = field.channels();
    (0..steps)
        .map(|t| {
            let mut data = Vec::with_capacity(ch * n);
            for c in 0..ch {
                data.extend_from_slice(&field.channel(c)[t * n..(t + 1) * n]);
            }
            RealField::new(grid.clone(), ch, data)
        })
        .collect()
}

/// Generate `count` trajectories in parallel and write them with the manifest.
pub fn generate_dataset(spec: &DatasetSpec, count: usize, seed: u64, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let results: Vec<(RealField, TrajectoryMeta)> = (0..count)
        .into_par_iter()
        .map(|i| generate_trajectory(spec, seed, i))
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(count);
    for (field, meta) in results {
        fld::write_fld(&field, dir.join(&meta.file))?;
        entries.push(meta);
    }
    let manifest = Manifest {
        kind: spec.kind,
        entries,
    };
    manifest.write(dir)?;
    Ok(manifest)
}

/// Read a trajectory with its physical grid rebuilt from the manifest stanza.
pub fn load_trajectory(dir: impl AsRef<Path>, meta: &TrajectoryMeta) -> Result<RealField> {
    let path = dir.as_ref().join(&meta.file);
    let t: FldTensor = fld::read_tensor(&path)?;
    if t.dims.len() < 3 || t.dims[1] != meta.steps {
        return Err(Error::Format(format!(
            "{}: dims {:?} do not match {} recorded steps",
            meta.file, t.dims, meta.steps
        )));
    }
    let mut axes = vec![Axis::temporal("t", t.dims[1], t.dims[1] as f64 * meta.dt)];
    for (a, &size) in t.dims[2..].iter().enumerate() {
        axes.push(Axis::spatial(["x", "y", "z"].get(a).copied().unwrap_or("w"), size, meta.length));
    }
    RealField::new(GridSpec::new(axes)?, t.dims[0], t.data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_kse() -> DatasetSpec {
        let mut spec = DatasetSpec::new(DatasetKind::Kse);
        spec.kse = KseConfig {
            n: 32,
            warmup: 5,
            steps: 6,
            ..KseConfig::default()
        };
        spec
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            kind: DatasetKind::Kse,
            entries: vec![TrajectoryMeta {
                file: trajectory_file(3),
                stream: "solver/3".into(),
                seed: 7,
                length: 0.1 + 0.2,
                dt: 0.2,
                nu: 1.0,
                n: 64,
                warmup: 360,
                steps: 10,
                extra: vec![("channels".into(), "u".into())],
            }],
        };
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert!(Manifest::parse("kind = kse\ncount = 2\n\nfile = a\n").is_err());
    }

    #[test]
    fn kse_dataset_is_deterministic_with_sampled_parameters() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = small_kse();
        let m = generate_dataset(&spec, 3, 7, a.path()).unwrap();
        generate_dataset(&spec, 3, 7, b.path()).unwrap();
        for e in &m.entries {
            let x = std::fs::read(a.path().join(&e.file)).unwrap();
            let y = std::fs::read(b.path().join(&e.file)).unwrap();
            assert_eq!(x, y);
            assert!((57.6..=70.4).contains(&e.length) && (0.18..=0.22).contains(&e.dt));
            let f = load_trajectory(a.path(), e).unwrap();
            assert_eq!(f.grid().shape(), vec![6, 32]);
        }
        assert_ne!(m.entries[0].length, m.entries[1].length);
        assert_eq!(Manifest::read(a.path()).unwrap(), m);
    }

    #[test]
    fn time_stacking_round_trip() {
        let g = GridSpec::unit(&[4, 3]).unwrap();
        let frames: Vec<RealField> = (0..5)
            .map(|t| RealField::from_fn(&g, 2, |c, x| t as f64 + 10.0 * c as f64 + x[0] + 3.0 * x[1]))
            .collect();
        let s = stack_in_time(&frames, 0.5).unwrap();
        assert_eq!(s.grid().shape(), vec![5, 4, 3]);
        assert_eq!(split_in_time(&s).unwrap(), frames);
    }
}
