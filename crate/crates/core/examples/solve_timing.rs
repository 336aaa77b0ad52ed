//! Quick timing probe for the relaxation solve at experiment scale.

use std::time::Instant;

use csforge_core::design::{procedure1_gram, SolverOpts};
use csforge_core::harness::{preset, problem_data, resolve_point, Scale};
use csforge_core::model::{ChannelSpec, SystemSpec};

fn main() {
    let cfg = preset("fig4", Scale::Desk).unwrap();
    let data = problem_data(&cfg).unwrap();
    let point = resolve_point(&cfg, 12.0).unwrap();
    let sys = csforge_core::harness::build_system(&cfg, &point, csforge_core::harness::Setup::Single).unwrap();
    let spec: &ChannelSpec = match &sys {
        SystemSpec::Single(s) => s,
        _ => unreachable!(),
    };
    let t0 = Instant::now();
    let opts = SolverOpts { tol: 1e-5, max_iter: 30_000 };
    let (q, diag, _raw) =
        procedure1_gram(spec, &data.r, &data.r_x, &data.supports, opts, None).unwrap();
    println!(
        "elapsed {:.1}s iters {} status {:?} obj {:.6} feas {:.2e} conv {:.2e} trQ {:.4}",
        t0.elapsed().as_secs_f64(),
        diag.iterations,
        diag.status,
        diag.objective,
        diag.feas_residual,
        diag.conv_residual,
        q.trace(),
    );
}
