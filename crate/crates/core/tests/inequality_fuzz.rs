mod common;

use kfwer::inequalities::{bound_a, bound_b, combined_bound, exact_at_least_k, moments_from_system};

#[test]
fn bounds_dominate_exact_probability() {
    let mut rng = common::rng(2024);
    for _ in 0..1000 {
        let system = common::random_system(&mut rng);
        for k in 1..=system.n() {
            let exact = exact_at_least_k(&system, k);
            let moments = moments_from_system(&system, k).unwrap();
            for m in 1..=k {
                assert!(moments.b_term(m).unwrap() >= exact - 1e-12, "B term m={m} k={k}");
            }
            let b = bound_b(&moments).unwrap();
            if k >= 2 {
                for m in 2..=k {
                    assert!(moments.a_term(m).unwrap() >= exact - 1e-12, "A term m={m} k={k}");
                }
                let a = bound_a(&moments).unwrap();
                let combined = combined_bound(&moments).unwrap();
                assert_eq!(combined.combined, a.value.min(b.value).clamp(0.0, 1.0));
                assert!(exact <= combined.combined + 1e-12);
            } else {
                // P(at least one) ≤ S₁.
                assert!(exact <= b.value + 1e-12);
            }
        }
    }
}
