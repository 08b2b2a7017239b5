mod common;

use nalgebra::{DMatrix, DVector};
use ospca::harness::GradientKind;
use ospca::{
    agspca_fit, agspca_fit_sorted, egspca_extend_ranked, egspca_select, egspca_select_ranked,
    gspca_fit, metric_sqrt, pca_fit, subspace_angle, GradientProbe, MetricDescriptor, SampleMatrix,
    TailRanking,
};
use proptest::prelude::*;

use common::*;

fn problem() -> impl Strategy<Value = (SampleMatrix, DVector<f64>, f64)> {
    (2usize..4, 2usize..4, 4usize..10).prop_flat_map(|(nx, ny, m)| {
        let d = nx * ny;
        (
            prop::collection::vec(-3.0f64..3.0, d * m),
            prop::collection::vec(-2.0f64..2.0, d),
            0.0f64..20.0,
        )
            .prop_filter_map("zero gradient", move |(x, j, eps)| {
                let j = DVector::from_vec(j);
                (j.norm() > 1e-3).then(|| {
                    (
                        SampleMatrix::new(DMatrix::from_vec(d, m, x), nx, ny).unwrap(),
                        j,
                        eps,
                    )
                })
            })
    })
}

fn zero_probe(prep: &ospca::harness::Prepared) -> GradientProbe {
    GradientProbe::new(
        prep.eta.clone(),
        DVector::zeros(prep.pca.dim()),
        0.0,
        &prep.pca,
    )
    .unwrap()
}

#[test]
fn zero_epsilon_reproduces_pca_exactly() {
    let prep = prepared();
    let probe = prep.gradient(GradientKind::Central).unwrap();
    let gs = gspca_fit(&prep.train, &probe.gradient, 0.0).unwrap();
    assert_eq!(gs, prep.pca);
    let (ags, _) = agspca_fit(&prep.pca, &probe).unwrap();
    assert_eq!(ags.components, prep.pca.components);
}

#[test]
fn gspca_spectrum_is_the_hat_space_spectrum() {
    let prep = prepared();
    let probe = prep
        .gradient(GradientKind::Central)
        .unwrap()
        .with_scaled_epsilon(prep.config.eps_scaled)
        .unwrap();
    let gs = gspca_fit(&prep.train, &probe.gradient, probe.epsilon).unwrap();
    let root = metric_sqrt(&probe.gradient, probe.epsilon).unwrap();
    let hat = prep.train.map_samples(|x| root.forward(x)).unwrap();
    let (values, _) = second_moment_eigen(&hat);
    for i in 0..20 {
        assert!(
            rel_err(gs.singular_values[i], values[i]) < 1e-9,
            "sigma_{i}"
        );
    }
    let back = root.dense_inverse() * root.dense_forward();
    assert!((back - DMatrix::identity(gs.dim(), gs.dim())).amax() < 1e-12);
}

#[test]
fn directional_gradient_leaves_the_head_untouched() {
    let prep = prepared();
    let probe = prep
        .gradient(GradientKind::Directional)
        .unwrap()
        .with_scaled_epsilon(prep.config.eps_scaled)
        .unwrap();
    assert!(probe.b.rows(0, prep.n).iter().all(|&b| b == 0.0));
    let (ags, corr) = agspca_fit(&prep.pca, &probe).unwrap();
    assert_eq!(
        ags.components.columns(0, prep.n),
        prep.pca.components.columns(0, prep.n)
    );
    assert_eq!(corr.order, (0..prep.pca.rank()).collect::<Vec<_>>());
}

#[test]
fn energy_ranking_matches_brute_force() {
    let prep = prepared();
    let probe = prep.gradient(GradientKind::Central).unwrap();
    let sigma = &prep.pca.singular_values;
    let energy: Vec<f64> = (0..sigma.len())
        .map(|i| probe.b[i].powi(2) * sigma[i])
        .collect();
    let coefficient: Vec<f64> = probe.b.iter().map(|b| b * b).collect();
    for count in [1, 3, 10] {
        assert_eq!(
            egspca_select_ranked(&probe, sigma, prep.n, count, TailRanking::Energy).unwrap(),
            brute_force_select(&energy, prep.n, count)
        );
        assert_eq!(
            egspca_select(&probe, prep.n, count).unwrap(),
            brute_force_select(&coefficient, prep.n, count)
        );
    }
}

#[test]
fn flat_tail_falls_back_to_spectrum_order() {
    let prep = prepared();
    let probe = zero_probe(prep);
    let picked = egspca_select(&probe, prep.n, 3).unwrap();
    assert_eq!(picked, vec![prep.n, prep.n + 1, prep.n + 2]);
    let ext = egspca_extend_ranked(&prep.pca, &probe, prep.n, 3, TailRanking::Energy).unwrap();
    assert_eq!(ext.components, prep.pca.components);
}

#[test]
fn extension_rejects_oversized_requests() {
    let prep = prepared();
    let probe = prep.gradient(GradientKind::Central).unwrap();
    let tail = prep.pca.rank() - prep.n;
    assert!(egspca_select(&probe, prep.n, tail + 1).is_err());
    assert!(egspca_select(&probe, prep.n, 0).is_err());
    assert!(egspca_select_ranked(&probe, &[1.0], prep.n, 1, TailRanking::Energy).is_err());
}

#[test]
fn sorted_variant_orders_by_corrected_sigma() {
    let prep = prepared();
    let probe = prep
        .gradient(GradientKind::Central)
        .unwrap()
        .with_scaled_epsilon(5.0)
        .unwrap();
    let (sorted, corr) = agspca_fit_sorted(&prep.pca, &probe).unwrap();
    assert!(sorted.singular_values.windows(2).all(|w| w[0] >= w[1]));
    let (plain, _) = agspca_fit(&prep.pca, &probe).unwrap();
    for (p, &k) in corr.order.iter().enumerate() {
        assert_eq!(sorted.component(p), plain.component(k));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gspca_agrees_with_dense_root((samples, j, eps) in problem()) {
        let gs = gspca_fit(&samples, &j, eps).unwrap();
        let (values, components) = gspca_dense(&samples, &j, eps);
        prop_assert!(gs.orthonormality_defect() < 1e-9);
        let scale = values[0];
        for i in 0..gs.rank() {
            prop_assert!((gs.singular_values[i] - values[i]).abs() < 1e-9 * scale);
        }
        // Components are only unique for well separated eigenvalues.
        for i in 0..gs.rank() {
            let gap_below = if i + 1 < values.len() { values[i] - values[i + 1] } else { values[i] };
            let gap_above = if i > 0 { values[i - 1] - values[i] } else { f64::INFINITY };
            if gap_below.min(gap_above) > 1e-3 * scale {
                let diff = (gs.component(i) - components.column(i)).amax();
                prop_assert!(diff < 1e-6, "component {} differs by {}", i, diff);
            }
        }
    }

    #[test]
    fn gspca_minimizes_the_weighted_residual((samples, j, eps) in problem()) {
        let pca = pca_fit(&samples).unwrap();
        let gs = gspca_fit(&samples, &j, eps).unwrap();
        let n = 1usize;
        let (c_pca, f_pca) = span_scores(&pca, &samples, n, &j);
        let (c_gs, f_gs) = span_scores(&gs, &samples, n, &j);
        prop_assert!(f_gs + eps * c_gs <= f_pca + eps * c_pca + 1e-9 * (1.0 + f_pca + eps * c_pca));
    }

    #[test]
    fn first_order_angle_vanishes_with_epsilon((samples, j, _eps) in problem()) {
        let pca = pca_fit(&samples).unwrap();
        let probe = GradientProbe::new(DVector::zeros(samples.dim()), j.clone(), 0.0, &pca).unwrap();
        let gaps_ok = pca.singular_values.windows(2).all(|w| w[0] - w[1] > 1e-2 * pca.singular_values[0]);
        prop_assume!(gaps_ok && pca.rank() >= 2);
        let angle_at = |s: f64| {
            let p = probe.clone().with_scaled_epsilon(s).unwrap();
            let gs = gspca_fit(&samples, &j, p.epsilon).unwrap();
            let (ags, _) = agspca_fit(&pca, &p).unwrap();
            subspace_angle(&ags, &gs, 1).unwrap()
        };
        let (a1, a2) = (angle_at(1e-4), angle_at(5e-5));
        prop_assert!(a1 < 1e-2);
        prop_assert!(a2 <= a1 * 0.5 || a1 < 1e-12, "angles {} -> {}", a1, a2);
    }

    #[test]
    fn metric_is_symmetric_positive(j in prop::collection::vec(-2.0f64..2.0, 6), eps in 0.0f64..10.0) {
        let j = DVector::from_vec(j);
        let metric = MetricDescriptor::gradient_weighted(j, eps).unwrap();
        let w = metric.dense(6);
        prop_assert!((&w - w.transpose()).amax() < 1e-14);
        prop_assert!(w.symmetric_eigenvalues().min() >= 1.0 - 1e-12);
    }
}
