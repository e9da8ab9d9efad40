use nctk_core::scenarios;
use nctk_core::tomo::{synth, verdict_pipeline};

#[test]
fn round_trip_dimensions_and_verdicts() {
    let cases = [
        (scenarios::qubit_stabilizer(), 4, "embeddable"),
        (scenarios::boxworld_pr(), 3, "not_embeddable"),
        (scenarios::simplex(2).unwrap(), 2, "embeddable"),
    ];
    for (i, (f, k, verdict)) in cases.into_iter().enumerate() {
        let c = synth(&f, 100_000, 17 + i as u64).unwrap();
        let r = verdict_pipeline(&c, 8).unwrap();
        println!(
            "{}: k={} chi2={:.3} dof={} strict={} r*={:.5} thr={:.4}",
            f.name, r.dimension, r.chi2, r.dof, r.strict_verdict, r.r_star, r.noise_threshold
        );
        assert_eq!(r.dimension, k, "{}", f.name);
        assert_eq!(r.verdict, verdict, "{}", f.name);
    }
}
