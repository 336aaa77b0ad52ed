//! Probes the fig4 configuration at one sweep point with different decoders.
//! Caches the factored design on disk so repeated runs skip the conic solve.
use csforge_core::design::{design_baseline, design_procedure1, BaselineKind, SolverOpts};
use csforge_core::harness::{preset, problem_data, resolve_point, MeasurementSpec, Scale};
use csforge_core::linalg::Matrix;
use csforge_core::model::{ChannelSpec, SystemSpec};
use csforge_core::recon;
use csforge_core::rng::Stream;

fn load_or_solve(path: &str, build: impl FnOnce() -> Matrix) -> Matrix {
    if let Ok(text) = std::fs::read_to_string(path) {
        let (dims, data): ((usize, usize), Vec<f64>) = serde_json::from_str(&text).unwrap();
        return Matrix::from_fn(dims.0, dims.1, |i, j| data[i * dims.1 + j]);
    }
    let m = build();
    let data: Vec<f64> = (0..m.rows()).flat_map(|i| (0..m.cols()).map(move |j| (i, j))).map(|(i, j)| m.get(i, j)).collect();
    std::fs::write(path, serde_json::to_string(&((m.rows(), m.cols()), data)).unwrap()).unwrap();
    m
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(18);
    let trials: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(500);
    let mut cfg = preset("fig4", Scale::Desk).unwrap();
    cfg.seed = 1;
    cfg.omega_prime_size = Some(8000);
    cfg.m = MeasurementSpec::One(m);
    let data = problem_data(&cfg).unwrap();
    let point = resolve_point(&cfg, m as f64).unwrap();
    let spec =
        ChannelSpec::identity(cfg.n, point.g[0], cfg.sigma_v, cfg.sigma_w, m, point.p).unwrap();
    let opts = SolverOpts { tol: 1e-5, max_iter: 120_000 };
    let a_proc = load_or_solve(&format!("/tmp/proc_a_full_{m}.json"), || {
        design_procedure1(&spec, &data.r, &data.r_x, &data.supports, opts, None)
            .unwrap()
            .matrices[0]
            .clone()
    });
    let a_tf = design_baseline(
        BaselineKind::TightFrame,
        &spec,
        &data.r,
        &data.r_x,
        &data.supports,
        cfg.seed ^ 0x54464d45,
        opts,
    )
    .unwrap()
    .matrices[0]
    .clone();
    let sys = SystemSpec::Single(spec);
    let g = point.g[0];
    let full = csforge_core::model::SupportCollection::exact(cfg.n, cfg.k).unwrap();
    for (name, a) in [("proc", &a_proc), ("tf", &a_tf)] {
        let mats = vec![a.clone()];
        let mut se_ex = 0.0;
        let mut se_r20 = 0.0;
        let mut se_r100 = 0.0;
        for t in 0..trials {
            let mut stream = Stream::substream(cfg.seed, t as u64);
            let (_s, x) = data.model.draw(&mut stream);
            // y = g A x + w (sigma_v = 0, H = I).
            let ax = a.matvec(&x);
            let y: Vec<f64> =
                ax.iter().map(|v| g * v + cfg.sigma_w * stream.normal()).collect();
            let d1 = recon::exhaustive_mmse(&y, &mats, &sys, &data.r, &full).unwrap();
            se_ex += d1.x_hat.iter().zip(&x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            let mut s2 = Stream::substream(cfg.seed ^ 77, t as u64);
            let d2 = recon::random_omp(&y, &mats, &sys, &data.r, 20, &mut s2, None).unwrap();
            se_r20 += d2.x_hat.iter().zip(&x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
            let mut s3 = Stream::substream(cfg.seed ^ 78, t as u64);
            let d3 = recon::random_omp(&y, &mats, &sys, &data.r, 100, &mut s3, None).unwrap();
            se_r100 += d3.x_hat.iter().zip(&x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        }
        let k = cfg.k as f64;
        let db = |se: f64| 10.0 * (se / trials as f64 / k).log10();
        println!(
            "M={m} {name}: exhaustive={:.3} dB  randomp20={:.3} dB  randomp100={:.3} dB",
            db(se_ex),
            db(se_r20),
            db(se_r100)
        );
    }
}
