mod common;

use common::{brute_marginal, job, max_rel, well_conditioned};
use supercone::amplitude::{ProcessKind, Role};
use supercone::engine::{marginal_density, RunOptions};

#[test]
fn engine_matches_brute_force_on_16_grid() {
    for kind in [ProcessKind::TypeII, ProcessKind::TypeI] {
        let j = well_conditioned(kind);
        for role in [Role::Signal, Role::Idler] {
            let engine = marginal_density(&j, role, &RunOptions::default())
                .unwrap()
                .density;
            let oracle = brute_marginal(&j, role);
            assert!(oracle.iter().all(|v| *v > 0.0));
            let err = max_rel(&engine.values, &oracle);
            assert!(err < 1e-12, "{kind:?} {role:?}: {err:e}");
        }
    }
}

#[test]
fn engine_tracks_brute_force_at_physical_parameters() {
    for kind in [ProcessKind::TypeII, ProcessKind::TypeI] {
        let j = job(kind, 16, 16, 0.25);
        for role in [Role::Signal, Role::Idler] {
            let engine = marginal_density(&j, role, &RunOptions::default())
                .unwrap()
                .density;
            let oracle = brute_marginal(&j, role);
            let err = max_rel(&engine.values, &oracle);
            println!("{kind:?} {role:?} physical-parameter max relative difference {err:e}");
            assert!(err < 1e-9, "{kind:?} {role:?}: {err:e}");
        }
    }
}

#[test]
fn degenerate_type_i_roles_agree() {
    let j = job(ProcessKind::TypeI, 16, 16, 0.25);
    let s = marginal_density(&j, Role::Signal, &RunOptions::default()).unwrap();
    let i = marginal_density(&j, Role::Idler, &RunOptions::default()).unwrap();
    assert!(max_rel(&s.density.values, &i.density.values) < 1e-9);
}
