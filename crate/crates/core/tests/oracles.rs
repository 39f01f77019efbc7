//! Library outputs checked against independent brute-force evaluations.

mod common;

use common::*;
use locsparse_core::admm::*;
use locsparse_core::dictionary::*;
use locsparse_core::experiments::*;
use locsparse_core::projection::*;
use locsparse_core::recovery::*;
use locsparse_core::*;
use rand::Rng;

#[test]
fn norms_match_loops() {
    let mut r = rng(1);
    for _ in 0..50 {
        let u = uniform(&mut r, 5, 4, -2.0, 2.0);
        assert!((norm_l1_inf(&u) - l1_inf(&u)).abs() < 1e-14);
        assert!((norm_inf_1(&u) - inf_1(&u)).abs() < 1e-14);
        let mut count = 0;
        for i in 0..5 {
            let c = (0..4).filter(|&j| u[(i, j)] != 0.0).count();
            count = count.max(c);
        }
        assert_eq!(norm_l0_inf(&u, 0.0), count);
    }
}

#[test]
fn dense_forward_matches_triple_loop() {
    let mut r = rng(2);
    let (l, m, n, t) = (3, 4, 2, 5);
    let a = uniform(&mut r, l, m, -1.0, 1.0);
    let u = uniform(&mut r, m, n, 0.0, 1.0);
    let b = uniform(&mut r, t, n, -1.0, 1.0);
    let w = apply_forward(
        &ForwardOperator::dense(a.clone()).unwrap(),
        &CoefficientMatrix::new(u.clone(), SpatialShape::flat(m)).unwrap(),
        &DictionaryMatrix::from_values(b.clone()).unwrap(),
    )
    .unwrap();
    for li in 0..l {
        for k in 0..t {
            let mut s = 0.0;
            for i in 0..m {
                for j in 0..n {
                    s += a[(li, i)] * u[(i, j)] * b[(k, j)];
                }
            }
            assert!((w.values()[(li, k)] - s).abs() < 1e-13);
        }
    }
}

#[test]
fn conv_matches_direct_periodic_sum_and_both_orders_agree() {
    let mut r = rng(3);
    let shape = SpatialShape::new(5, 7);
    let kernel = uniform(&mut r, 3, 3, 0.0, 1.0);
    let op = Conv2dOperator::new(kernel.clone(), shape).unwrap();
    let x = uniform(&mut r, 35, 1, -1.0, 1.0);
    let mut got = vec![0.0; 35];
    op.apply_image(x.as_slice(), &mut got);
    for row in 0..5 {
        for col in 0..7 {
            let mut s = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let rr = (row as isize - (a as isize - 1)).rem_euclid(5) as usize;
                    let cc = (col as isize - (b as isize - 1)).rem_euclid(7) as usize;
                    s += kernel[(a, b)] * x[rr * 7 + cc];
                }
            }
            assert!((got[row * 7 + col] - s).abs() < 1e-14);
        }
    }
    // N <= T and N > T take different evaluation orders
    let a = ForwardOperator::Conv2d(op);
    for (n, t) in [(2, 4), (4, 2)] {
        let u = CoefficientMatrix::new(uniform(&mut r, 35, n, 0.0, 1.0), shape).unwrap();
        let b = DictionaryMatrix::from_values(uniform(&mut r, t, n, 0.0, 1.0)).unwrap();
        let w = apply_forward(&a, &u, &b).unwrap();
        let other = a.apply(u.values()).unwrap() * b.values().transpose();
        assert!((w.values() - other).amax() < 1e-13);
    }
}

#[test]
fn noise_statistics() {
    let w = DataMatrix::new(Mat::zeros(200, 200)).unwrap();
    let out = add_gaussian_noise(&w, 0.05, 11).unwrap();
    let v = out.values();
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let std = (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((std - 0.05).abs() < 0.05 * 0.05, "std {std}");
    assert!(mean.abs() < 1e-3);
}

#[test]
fn constant_curve_matches_closed_form() {
    let grid: Vec<f64> = (0..256).map(|k| k as f64 / 255.0).collect();
    let decays = DecayGrid::new(vec![0.05, 0.2, 0.5, 0.75]).unwrap();
    let b = build_kinetic_dictionary(&InputCurve::constant(256, 1.0).unwrap(), &decays, &grid).unwrap();
    for (j, &k) in decays.params().iter().enumerate() {
        for (i, &t) in grid.iter().enumerate() {
            let exact = (1.0 - (-k * t).exp()) / k;
            assert!((b.values()[(i, j)] - exact).abs() < 1e-6);
        }
    }
}

fn gamma_curve(t: f64) -> f64 {
    t * (-t / 0.5).exp() + 0.1 * t * t
}

/// Trapezoid rule with `refine` sub-intervals per grid interval, evaluating
/// the analytic curve directly.
fn fine_quadrature(grid: &[f64], i: usize, k: f64, refine: usize) -> f64 {
    let t = grid[i];
    let f = |s: f64| gamma_curve(s) * (-k * (t - s)).exp();
    let mut acc = 0.0;
    for m in 0..i {
        let h = (grid[m + 1] - grid[m]) / refine as f64;
        for q in 0..refine {
            let a = grid[m] + q as f64 * h;
            acc += 0.5 * h * (f(a) + f(a + h));
        }
    }
    acc
}

#[test]
fn arbitrary_curve_matches_refined_quadrature() {
    let grid: Vec<f64> = (0..2000).map(|k| k as f64 / 1999.0).collect();
    let curve = InputCurve::new(grid.iter().map(|&t| gamma_curve(t)).collect(), "test").unwrap();
    let decays = DecayGrid::log_spaced(0.1, 2.0, 4).unwrap();
    let b = build_kinetic_dictionary(&curve, &decays, &grid).unwrap();
    for i in (400..2000).step_by(160) {
        for (j, &k) in decays.params().iter().enumerate() {
            let want = fine_quadrature(&grid, i, k, 100);
            let got = b.values()[(i, j)];
            assert!(((got - want) / want).abs() < 1e-6, "t={} k={k}: {got} vs {want}", grid[i]);
        }
    }
}

#[test]
fn l1_normalization_and_incoherence_oracle() {
    let mut r = rng(4);
    for _ in 0..20 {
        let raw = DictionaryMatrix::from_values(uniform(&mut r, 6, 4, -1.0, 1.0)).unwrap();
        let b = normalize_columns(&raw, ColumnNorm::L1).unwrap();
        for j in 0..4 {
            let s: f64 = b.values().column(j).iter().map(|x| x.abs()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let v = raw.values();
        let mut want: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let dot: f64 = (0..6).map(|k| v[(k, i)] * v[(k, j)]).sum();
                    let nn: f64 = (0..6).map(|k| v[(k, i)] * v[(k, i)]).sum();
                    want = want.max(dot.abs() / nn);
                }
            }
        }
        assert!((mutual_incoherence(&raw).unwrap() - want).abs() < 1e-12);
    }
}

#[test]
fn scaling_report_matches_brute_force() {
    let mut r = rng(5);
    for trial in 0..30 {
        let mut v = uniform(&mut r, 5, 4, -1.0, 1.0);
        // perturb a column now and then so both outcomes occur
        let normed = normalize_columns(&DictionaryMatrix::from_values(v.clone()).unwrap(), ColumnNorm::L2).unwrap();
        v = normed.values().clone();
        if trial % 3 == 0 {
            v.column_mut(trial % 4).scale_mut(1.5);
        }
        let b = DictionaryMatrix::from_values(v.clone()).unwrap();
        let used = [0usize, 2];
        let rep = check_scaling_condition(&b, &used).unwrap();
        let mut fails = 0;
        for &j in &used {
            let nrm: f64 = (0..5).map(|k| v[(k, j)] * v[(k, j)]).sum::<f64>().sqrt();
            if (nrm - 1.0).abs() > 1e-9 {
                fails += 1;
            }
            for o in 0..4 {
                if o != j {
                    let dot: f64 = (0..5).map(|k| v[(k, j)] * v[(k, o)]).sum();
                    if dot.abs() > 1.0 + 1e-9 {
                        fails += 1;
                    }
                }
            }
        }
        assert_eq!(rep.violations.len(), fails);
        assert_eq!(rep.satisfied, fails == 0);
    }
}

#[test]
fn projection_matches_active_set_oracle() {
    let mut r = rng(6);
    for _ in 0..500 {
        let n = r.random_range(2..=6);
        let g: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let (v, beta, lambda) = (
            r.random_range(0.1..10.0),
            r.random_range(0.0..2.0),
            r.random_range(0.1..10.0),
        );
        let got = project_row(&g, &RowProjectionParams::new(v, beta, lambda).unwrap()).unwrap();
        let want = projection_oracle(&g, v, beta, lambda);
        let err = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "g={g:?} v={v} beta={beta} lambda={lambda}: {got:?} vs {want:?}");
    }
}

fn random_state(r: &mut rand_chacha::ChaCha8Rng, m: usize, n: usize, t: usize) -> SolverState {
    let mut st = SolverState::zeros(m, n, t, r.random_range(0.2..2.0), r.random_range(0.2..2.0));
    st.u = uniform(r, m, n, -1.0, 1.0);
    st.d = uniform(r, m, n, 0.0, 1.0);
    st.z = uniform(r, m, t, -1.0, 1.0);
    st.p = uniform(r, m, n, -1.0, 1.0);
    st.q = uniform(r, m, t, -1.0, 1.0);
    st.d_old = uniform(r, m, n, 0.0, 1.0);
    st.z_old = uniform(r, m, t, -1.0, 1.0);
    st
}

#[test]
fn u_update_plug_back() {
    let mut r = rng(7);
    let (m, n, t) = (6, 3, 4);
    let b = uniform(&mut r, t, n, -1.0, 1.0);
    let mut st = random_state(&mut r, m, n, t);
    let f = u_factorization(&b, st.lambda, st.mu).unwrap();
    update_u(&mut st, &b, &f);
    let lhs = &st.u * (Mat::identity(n, n) * st.lambda + b.transpose() * &b * st.mu);
    let rhs = (&st.d - &st.p) * st.lambda + (&st.z - &st.q) * &b * st.mu;
    assert!((lhs - rhs).norm() < 1e-10);
    assert!((&st.ubt - &st.u * b.transpose()).norm() < 1e-12);
}

#[test]
fn z_update_plug_back_dense_identity_and_delta() {
    let mut r = rng(8);
    let (m, n, t) = (5, 2, 3);
    let b = uniform(&mut r, t, n, -1.0, 1.0);
    let w = uniform(&mut r, m, t, -1.0, 1.0);
    for a in [
        ForwardOperator::dense(uniform(&mut r, 4, m, -1.0, 1.0)).unwrap(),
        ForwardOperator::identity(m),
        ForwardOperator::Conv2d(Conv2dOperator::delta(SpatialShape::flat(m))),
    ] {
        let mut st = random_state(&mut r, m, n, t);
        st.ubt = &st.u * b.transpose();
        let wl = if a.out_dim() == m { w.clone() } else { uniform(&mut r, a.out_dim(), t, -1.0, 1.0) };
        let atw = a.adjoint(&wl).unwrap();
        let solver = a.normal_solver(st.mu).unwrap();
        update_z(&mut st, &atw, &solver);
        let lhs = a.adjoint(&a.apply(&st.z).unwrap()).unwrap() + &st.z * st.mu;
        let rhs = &atw + (&st.ubt + &st.q) * st.mu;
        assert!((lhs - &rhs).norm() < 1e-10);
        if a.out_dim() == m && matches!(a, ForwardOperator::Conv2d(_)) {
            let closed = (&wl + (&st.ubt + &st.q) * st.mu) / (1.0 + st.mu);
            assert!((&st.z - closed).amax() < 1e-12);
        }
    }
}

#[test]
fn residuals_tolerances_and_bound_match_formulas() {
    let mut r = rng(9);
    let (m, n, t) = (4, 3, 5);
    let b = uniform(&mut r, t, n, -1.0, 1.0);
    let mut st = random_state(&mut r, m, n, t);
    st.ubt = &st.u * b.transpose();
    let res = compute_residuals(&mut st, &b);
    let (l, mu) = (st.lambda, st.mu);
    let mut r1 = 0.0;
    let mut s = 0.0;
    for i in 0..m {
        for j in 0..n {
            r1 += (l * (st.d[(i, j)] - st.u[(i, j)])).powi(2);
            let mut zb = 0.0;
            for k in 0..t {
                zb += (st.z_old[(i, k)] - st.z[(i, k)]) * b[(k, j)];
            }
            s += (l * (st.d_old[(i, j)] - st.d[(i, j)]) + mu * zb).powi(2);
        }
    }
    let mut r2 = 0.0;
    for i in 0..m {
        for k in 0..t {
            let ub: f64 = (0..n).map(|j| st.u[(i, j)] * b[(k, j)]).sum();
            r2 += (mu * (st.z[(i, k)] - ub)).powi(2);
        }
    }
    assert!((res.r1 - r1.sqrt()).abs() < 1e-12);
    assert!((res.r2 - r2.sqrt()).abs() < 1e-12);
    assert!((res.s - s.sqrt()).abs() < 1e-12);

    let tol = update_tolerances(&st, &b, 1e-6, 1e-4);
    let fro = |x: &Mat| x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let e1 = ((m * n) as f64).sqrt() * 1e-6 + 1e-4 * fro(&st.u).max(fro(&st.d));
    let e2 = ((m * t) as f64).sqrt() * 1e-6 + 1e-4 * fro(&(&st.u * b.transpose())).max(fro(&st.z));
    let ed = ((m * n) as f64).sqrt() * 1e-6 + 1e-4 * fro(&(&st.p * l + &st.q * &b * mu));
    assert!((tol.eps_pri1 - e1).abs() < 1e-15);
    assert!((tol.eps_pri2 - e2).abs() < 1e-15);
    assert!((tol.eps_dual - ed).abs() < 1e-15);

    let bound = suboptimality_bound(&st, 0.7);
    let want = fro(&st.p) * r1.sqrt() + fro(&st.q) * r2.sqrt() + 0.7 * s.sqrt();
    assert!((bound - want).abs() < 1e-12);
    assert!(
        (suboptimality_bound(&st, 0.0) - fro(&st.p) * r1.sqrt() - fro(&st.q) * r2.sqrt()).abs() < 1e-12
    );
}

#[test]
fn dual_updates_match_formula() {
    let mut r = rng(10);
    let b = uniform(&mut r, 3, 2, -1.0, 1.0);
    let mut st = random_state(&mut r, 3, 2, 3);
    st.ubt = &st.u * b.transpose();
    let (p0, q0) = (st.p.clone(), st.q.clone());
    dual_updates(&mut st);
    assert!((&st.p - (&p0 - (&st.d - &st.u))).amax() < 1e-15);
    assert!((&st.q - (&q0 - (&st.z - &st.u * b.transpose()))).amax() < 1e-15);
}

#[test]
fn identity_problem_solves_to_positive_part() {
    let mut r = rng(11);
    let w = uniform(&mut r, 5, 3, -1.0, 1.0);
    let a = ForwardOperator::identity(5);
    let b = DictionaryMatrix::from_values(Mat::identity(3, 3)).unwrap();
    let data = DataMatrix::new(w.clone()).unwrap();
    let params = SolverParams {
        v_cap: 1e3,
        beta: 0.0,
        eps_abs: 1e-9,
        eps_rel: 1e-9,
        ..SolverParams::default()
    };
    let (u, rep) = solve(&a, &b, &data, &params).unwrap();
    assert_eq!(rep.stop_reason, StopReason::Converged);
    let want = w.map(|x| x.max(0.0));
    assert!((u.values() - &want).amax() < 1e-6);

    let everything = SupportMap {
        active: vec![vec![0, 1, 2]; 5],
        argmax: vec![Some(0); 5],
        zero_tol: 0.0,
    };
    let (ud, _) = debias_on_support(&a, &b, &data, &everything, &params).unwrap();
    assert!((ud.values() - &want).amax() < 1e-6);
}

#[test]
fn asymptotic_prediction_matches_scan() {
    let mut r = rng(12);
    for _ in 0..20 {
        let a = uniform(&mut r, 4, 5, -1.0, 1.0);
        let b = uniform(&mut r, 3, 4, -1.0, 1.0);
        let w = uniform(&mut r, 4, 3, -1.0, 1.0);
        let s = predict_asymptotic_support(
            &ForwardOperator::dense(a.clone()).unwrap(),
            &DataMatrix::new(w.clone()).unwrap(),
            &DictionaryMatrix::from_values(b.clone()).unwrap(),
            0.05,
        )
        .unwrap();
        let y = a.transpose() * &w * &b;
        for i in 0..5 {
            let top = (0..4).map(|j| y[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            let want: Vec<usize> = (0..4).filter(|&j| y[(i, j)] >= top - 0.05).collect();
            assert_eq!(s.active[i], want);
        }
    }
}

#[test]
fn support_error_matches_loop_oracle() {
    let mut r = rng(13);
    let shape = SpatialShape::new(16, 16);
    let ph = make_phantom(shape, 8, &default_regions(shape)).unwrap();
    for _ in 0..20 {
        let mut u = Mat::zeros(256, 8);
        let mut labels = vec![None; 256];
        for (i, l) in labels.iter_mut().enumerate() {
            if r.random_bool(0.6) {
                let j = r.random_range(0..8);
                u[(i, j)] = r.random_range(0.5..1.0);
                *l = Some(j);
            }
        }
        let e = support_error(&u, &ph, 1e-3).unwrap();
        let (mut wrong, mut weight, mut fp) = (0, 0, 0);
        for i in 0..256 {
            match (ph.labels[i], labels[i]) {
                (Some(t), Some(g)) if t != g => {
                    wrong += 1;
                    weight += (t as i64 - g as i64).unsigned_abs() as usize;
                }
                (Some(_), None) => {
                    wrong += 1;
                    weight += 1;
                }
                (None, Some(_)) => fp += 1,
                _ => {}
            }
        }
        assert_eq!(e.wrong_count, wrong);
        assert_eq!(e.false_positive_count, fp);
        assert!((e.percent - 100.0 * wrong as f64 / 256.0).abs() < 1e-12);
        assert!((e.weighted_percent - 100.0 * weight as f64 / 256.0).abs() < 1e-12);
    }
}

#[test]
fn recovery_instance_passes_scaling_and_is_one_sparse() {
    for seed in 0..10 {
        let inst = build_recovery_instance(4, 5, 6, seed).unwrap();
        assert!(check_scaling_condition(&inst.b, &inst.support).unwrap().satisfied);
        assert_eq!(norm_l0_inf(inst.u_hat.values(), 0.0), 1);
    }
}

#[test]
fn negative_instance_structure() {
    for seed in 0..10 {
        let neg = build_negative_instance(seed).unwrap();
        let inst = &neg.instance;
        let a = match &inst.a {
            ForwardOperator::Dense(a) => a.clone(),
            _ => unreachable!(),
        };
        assert!(a.iter().all(|x| *x != 0.0));
        let u = inst.u_hat.values();
        assert!(u[(0, 0)] < u[(1, 0)]);
        assert_eq!(inst.support, vec![0, 0]);
        let alt_data = &a * &neg.alternative * inst.b.values().transpose();
        assert!((alt_data - inst.w.values()).amax() < 1e-12);
        assert!(l1_inf(&neg.alternative) < l1_inf(u));
    }
}

#[test]
fn source_condition_on_subsampled_sensing() {
    // A keeps pixels 0 and 1 of 3; pixels 0 and 1 carry equal row sums.
    let a = ForwardOperator::dense(Mat::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
    let b = DictionaryMatrix::from_values(Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.6, 0.8])).unwrap();
    let u = Mat::from_row_slice(3, 2, &[0.7, 0.0, 0.0, 0.7, 0.0, 0.0]);
    let res = check_source_condition(&u, &a, &b, 1e-9).unwrap();
    assert!(res.satisfied, "residual {}", res.residual);
    let q = res.q.unwrap();
    let p = a.adjoint(&q).unwrap() * b.values();
    assert!(subgradient_membership(&p, &u, 1e-8).unwrap().member);
}
