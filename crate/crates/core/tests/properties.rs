use lacuna_core::discrepancy::{extreme_disc_1d, extreme_disc_2d, star_disc_1d, star_disc_2d};
use lacuna_core::martingale::{build_schedule, gap_len, main_len, random_cell, Approximant, ScheduleParams};
use lacuna_core::stochastics::{ks_distance, LimitLaw};
use lacuna_core::variation::{delta_j, hk_lower};
use lacuna_core::{
    check_hadamard_gap, frac_apply, DyadicPoint, FourierPoly, GapRatio, IntMatrix, LacunarySequence, NormKind,
    PointSet, Verdict,
};
use num_bigint::BigUint;
use proptest::prelude::*;

fn small_poly(d: usize) -> impl Strategy<Value = FourierPoly> {
    prop::collection::vec((prop::collection::vec(-4i64..=4, d), -1.0f64..1.0, -1.0f64..1.0), 1..6).prop_map(
        move |terms| {
            let terms: Vec<_> = terms.into_iter().filter(|(j, _, _)| j.iter().any(|&v| v != 0)).collect();
            FourierPoly::from_terms(d, 0.0, &terms).unwrap()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frac_apply_stays_in_unit_cube(
        rows in prop::collection::vec(prop::collection::vec(-50i64..50, 2), 2),
        xs in prop::collection::vec(any::<u64>(), 2),
        bits in 1u64..80,
    ) {
        let m = IntMatrix::from_rows(&rows).unwrap();
        let x = DyadicPoint::from_u64(&xs.iter().map(|v| if bits < 64 { v >> (64 - bits) } else { *v }).collect::<Vec<_>>(), bits).unwrap();
        let y = frac_apply(&m, &x).unwrap();
        let one = BigUint::from(1u8) << bits;
        prop_assert_eq!(y.bits(), bits);
        for c in y.coords() {
            prop_assert!(c < &one);
        }
        // float cross-check on the first coordinate
        let xf = x.to_f64_vec();
        let want = (rows[0][0] as f64 * xf[0] + rows[0][1] as f64 * xf[1]).rem_euclid(1.0);
        let got = y.coord_f64(0);
        let diff = (want - got).abs();
        prop_assert!(diff.min(1.0 - diff) < 1e-9);
    }

    #[test]
    fn gap_verdict_matches_margin(theta in 2i64..6, q in 1.05f64..7.0) {
        let seq = LacunarySequence::geometric(theta).unwrap();
        let r = check_hadamard_gap(&seq, &GapRatio::from_f64(q).unwrap(), 6, 2, 3, NormKind::Induced).unwrap();
        prop_assert_eq!(r.verdict == Verdict::Fail, r.first_violation.is_some());
        prop_assert_eq!(r.first_violation.is_some(), r.margin < 1.0);
        prop_assert_eq!(r.verdict == Verdict::Pass, q <= theta as f64);
    }

    #[test]
    fn gap_pass_is_monotone_in_q(theta in 2i64..5, q1 in 1.05f64..6.0, q2 in 1.05f64..6.0) {
        let seq = LacunarySequence::geometric(theta).unwrap();
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let run = |q: f64| check_hadamard_gap(&seq, &GapRatio::from_f64(q).unwrap(), 5, 3, 3, NormKind::Induced).unwrap();
        if run(hi).verdict == Verdict::Pass {
            prop_assert_eq!(run(lo).verdict, Verdict::Pass);
        }
    }

    #[test]
    fn fejer_mean_respects_sup_bound(coeffs in prop::collection::vec(0.0f64..1.0, 1..6), g in 1u64..8, x in 0.0f64..1.0) {
        // nonnegative cosine coefficients put the sup at x = 0
        let terms: Vec<_> = coeffs.iter().enumerate().map(|(i, &a)| (vec![i as i64 + 1], a, 0.0)).collect();
        let f = FourierPoly::from_terms(1, 0.0, &terms).unwrap();
        let sup: f64 = coeffs.iter().sum();
        prop_assert!(f.fejer_mean(g).eval_f64(&[x]).abs() <= sup + 1e-12);
    }

    #[test]
    fn fejer_plus_remainder_is_identity(f in small_poly(2), g in 1u64..6, x in prop::collection::vec(0.0f64..1.0, 2)) {
        let s = f.fejer_mean(g).eval_f64(&x) + f.remainder(g).eval_f64(&x);
        prop_assert!((s - f.eval_f64(&x)).abs() < 1e-12);
    }

    #[test]
    fn delta_is_additive_along_an_axis(f in small_poly(2), cuts in prop::collection::vec(0.0f64..1.0, 3), z in prop::collection::vec(0.0f64..1.0, 2)) {
        let mut c = cuts.clone();
        c.sort_by(f64::total_cmp);
        let (a, m, b) = (c[0], c[1], c[2]);
        let whole = delta_j(&f, &[0], &[a, 0.0], &[b, 0.0], &z).unwrap();
        let left = delta_j(&f, &[0], &[a, 0.0], &[m, 0.0], &z).unwrap();
        let right = delta_j(&f, &[0], &[m, 0.0], &[b, 0.0], &z).unwrap();
        prop_assert!((whole - left - right).abs() < 1e-12);
    }

    #[test]
    fn discrepancy_1d_invariants(raw in prop::collection::vec(0u64..1024, 1..40), shift in 0usize..40) {
        let rows: Vec<Vec<u64>> = raw.iter().map(|&v| vec![v]).collect();
        let p = PointSet::from_u64(&rows, 10).unwrap();
        let mut rot = rows.clone();
        rot.rotate_left(shift % rows.len());
        let q = PointSet::from_u64(&rot, 10).unwrap();
        let s = star_disc_1d(&p).unwrap().value;
        let e = extreme_disc_1d(&p).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&e));
        prop_assert!(s <= e + 1e-15);
        prop_assert!(e <= 2.0 * s + 1e-15);
        prop_assert_eq!(s, star_disc_1d(&q).unwrap().value);
        prop_assert_eq!(e, extreme_disc_1d(&q).unwrap().value);
        prop_assert!(s >= 0.5 / raw.len() as f64 - 1e-15);
    }

    #[test]
    fn discrepancy_2d_invariants(raw in prop::collection::vec(prop::collection::vec(0u64..256, 2), 1..16)) {
        let p = PointSet::from_u64(&raw, 8).unwrap();
        let mut rev = raw.clone();
        rev.reverse();
        let q = PointSet::from_u64(&rev, 8).unwrap();
        let s = star_disc_2d(&p).unwrap().value;
        let e = extreme_disc_2d(&p).unwrap().value;
        prop_assert!((0.0..=1.0).contains(&s) && s <= e + 1e-15);
        prop_assert_eq!(s, star_disc_2d(&q).unwrap().value);
        prop_assert_eq!(e, extreme_disc_2d(&q).unwrap().value);
    }

    #[test]
    fn schedule_tiles_the_index_range(n in 1usize..5000, eta in 0.1f64..0.9, g in 2u64..8) {
        let seq = LacunarySequence::geometric(2).unwrap();
        let s = build_schedule(&seq, n, &ScheduleParams::new(2.0, 1, g, eta)).unwrap();
        let mut next = 1;
        for b in &s.blocks {
            prop_assert_eq!(b.gap.start, next);
            prop_assert_eq!(b.gap.end, b.main.start);
            next = b.main.end;
        }
        prop_assert_eq!(next, n + 1);
        for b in s.blocks.iter().filter(|b| b.main.end <= n) {
            prop_assert_eq!(b.gap.len(), gap_len(b.k, 2.0, eta, s.c_dg));
            prop_assert_eq!(b.main.len(), main_len(b.k, eta, s.c_dg));
            prop_assert!(gap_len(b.k + 1, 2.0, eta, s.c_dg) <= b.main.len());
        }
        for w in s.blocks.windows(2) {
            prop_assert!(w[0].level <= w[1].level);
        }
        prop_assert!(s.sandwich_lower <= s.sandwich_upper);
    }

    #[test]
    fn gap_margin_shrinks_as_bounds_grow(
        steps in prop::collection::vec(2i64..6, 12),
        (n1, j1, k1) in (1usize..5, 1u64..3, 1usize..3),
        (dn, dj, dk) in (0usize..4, 0u64..2, 0usize..3),
    ) {
        let mut values = vec![1i64];
        for s in &steps {
            values.push(values.last().unwrap() * s);
        }
        let seq = LacunarySequence::explicit_scalars(&values).unwrap();
        let q = GapRatio::from_f64(2.5).unwrap();
        let small = check_hadamard_gap(&seq, &q, n1, j1, k1, NormKind::Induced).unwrap();
        let big = check_hadamard_gap(&seq, &q, n1 + dn, j1 + dj, k1 + dk, NormKind::Induced).unwrap();
        prop_assert!(big.margin <= small.margin);
    }

    #[test]
    fn matrix_product_matches_left_fold(
        factors in prop::collection::vec(prop::collection::vec(prop::collection::vec(-3i64..=3, 2), 2), 1..4),
        n in 1usize..8,
    ) {
        let mats: Vec<IntMatrix> = factors.iter().map(|f| IntMatrix::from_rows(f).unwrap()).collect();
        prop_assume!(mats.iter().all(|m| !m.is_singular()));
        let seq = LacunarySequence::matrix_product(factors.clone()).unwrap();
        // M_n^T = A_1^T ... A_n^T, multiplied from the left end
        let mut t = IntMatrix::identity(2);
        for i in 0..n {
            t = t.mul(&mats[i % mats.len()].transpose()).unwrap();
        }
        prop_assert_eq!(seq.get_matrix(n).unwrap().transpose(), t);
    }

    #[test]
    fn shifted_smoothed_terms_are_orthogonal(n in 1usize..12, g in 1u64..9, extra in 1usize..4) {
        // k > log2 G puts every frequency of p_G(2^(n+k) x) above those of p_G(2^n x)
        let k = (64 - g.leading_zeros()) as usize + extra - 1;
        prop_assume!((1u64 << k) > g);
        let seq = LacunarySequence::geometric(2).unwrap();
        let p = FourierPoly::cosine_pair().fejer_mean(g);
        let a = p.compose(&seq.get_matrix(n).unwrap()).unwrap();
        let b = p.compose(&seq.get_matrix(n + k).unwrap()).unwrap();
        prop_assert!(a.mul(&b).unwrap().mean().abs() < 1e-15);
    }

    #[test]
    fn hk_lower_grows_with_level(f in small_poly(2), level in 1u32..4) {
        let lo = hk_lower(&f, level, 2).unwrap();
        let hi = hk_lower(&f, level + 1, 2).unwrap();
        for (a, b) in lo.per_axes.iter().zip(&hi.per_axes) {
            prop_assert_eq!(&a.axes, &b.axes);
            prop_assert!(b.value >= a.value - 1e-12);
        }
    }

    #[test]
    fn adding_a_point_moves_the_count_by_at_most_one(raw in prop::collection::vec(0u64..1024, 2..40)) {
        let rows: Vec<Vec<u64>> = raw.iter().map(|&v| vec![v]).collect();
        let n = rows.len() - 1;
        let before = extreme_disc_1d(&PointSet::from_u64(&rows[..n], 10).unwrap()).unwrap().value;
        let after = extreme_disc_1d(&PointSet::from_u64(&rows, 10).unwrap()).unwrap().value;
        prop_assert!(((n + 1) as f64 * after - n as f64 * before).abs() <= 1.0 + before + 1e-12);
    }

    #[test]
    fn ks_distance_properties(mut v in prop::collection::vec(-4.0f64..4.0, 1..60), shift in 0usize..60) {
        let d = ks_distance(&v, &LimitLaw::StandardNormal).unwrap();
        prop_assert!(d > 0.0 && d <= 1.0);
        prop_assert!(d >= 0.5 / v.len() as f64 - 1e-12);
        let own = ks_distance(&v, &LimitLaw::Empirical { values: v.clone() }).unwrap();
        prop_assert!(own < 1e-12);
        let k = shift % v.len();
        v.rotate_left(k);
        prop_assert_eq!(d, ks_distance(&v, &LimitLaw::StandardNormal).unwrap());
    }

    #[test]
    fn limit_law_cdfs_are_monotone(a in -6.0f64..6.0, b in -6.0f64..6.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        for law in [LimitLaw::StandardNormal, LimitLaw::ErdosFortetMixture, LimitLaw::ScaledNormal { sigma: 0.7 }] {
            prop_assert!(law.cdf(lo) <= law.cdf(hi) + 1e-15);
            prop_assert!(law.cdf(-12.0) < 1e-9 && law.cdf(12.0) > 1.0 - 1e-9);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn martingale_differences_vanish_on_coarse_cells(k in 1usize..6, pick in any::<u64>(), idx in 0u64..1000) {
        let seq = LacunarySequence::geometric(2).unwrap();
        let params = ScheduleParams::new(2.0, 1, 4, 0.6);
        let probe = build_schedule(&seq, 1 << 20, &params).unwrap();
        let n = probe.blocks[5].main.end - 1;
        let s = build_schedule(&seq, n, &params).unwrap();
        let ap = Approximant::new(&FourierPoly::cosine().fejer_mean(4), &seq, &s).unwrap();
        let b = &s.blocks[k - 1];
        let i = b.main.start + (pick as usize) % b.main.len();
        let cell = random_cell(17, idx, 1, s.level(k - 1)).unwrap();
        let e = ap.tower_average(i, &cell, b.level).unwrap() - ap.cell_average(i, &cell).unwrap();
        prop_assert!(e.abs() <= 1e-12);
    }
}
