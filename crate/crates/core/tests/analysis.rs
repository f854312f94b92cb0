use pilotwave_core::analysis::{
    current_flux, normalize_and_compare, ArrivalHistogram, FluxCurve, FluxKind,
};
use pilotwave_core::{DetectorMode, DetectorSpec, PacketSum, TimeGrid};
use proptest::prelude::*;

#[test]
fn single_well_current_points_at_the_detector() {
    let det = DetectorSpec::new(-5.0, DetectorMode::FirstArrival);
    let grid = TimeGrid::new(0.0, 8.0, 80).unwrap();
    let j = current_flux(&PacketSum::single(1.0), &det, grid, FluxKind::BohmianJ).unwrap();
    assert!(j.values.iter().all(|&v| v >= 0.0));
    // The whole lower half eventually passes the plane.
    let long = TimeGrid::new(0.0, 4000.0, 4000).unwrap();
    let total = current_flux(&PacketSum::single(1.0), &det, long, FluxKind::BohmianJ).unwrap().integral();
    assert!((total - 0.5).abs() < 2e-3, "{total}");
}

#[test]
fn double_well_current_reverses() {
    let det = DetectorSpec::new(-30.0, DetectorMode::FirstArrival);
    let grid = TimeGrid::new(0.0, 381.0, 240).unwrap();
    let j = current_flux(&PacketSum::double(1.0, 20.0), &det, grid, FluxKind::BohmianJ).unwrap();
    assert!(j.values.iter().any(|&v| v < 0.0));
    assert!(j.values.iter().any(|&v| v > 0.0));
}

#[test]
fn empty_histogram_cannot_be_normalised() {
    let grid = TimeGrid::new(0.0, 1.0, 4).unwrap();
    let h = ArrivalHistogram::from_times(&[], grid, 10).flux(FluxKind::McFirstArrival);
    assert!(normalize_and_compare(&[("empty", &h)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn histograms_never_exceed_the_ensemble(
        times in proptest::collection::vec(-1.0f64..12.0, 0..400),
        bins in 1usize..50,
    ) {
        let grid = TimeGrid::new(0.0, 10.0, bins).unwrap();
        let h = ArrivalHistogram::from_times(&times, grid, 400);
        let inside = times.iter().filter(|&&t| (0.0..10.0).contains(&t)).count() as u64;
        prop_assert_eq!(h.counts.iter().sum::<u64>(), inside);
        prop_assert!(h.in_window() <= 400);
    }

    #[test]
    fn normalised_curves_integrate_to_one(
        values in proptest::collection::vec(0.0f64..5.0, 1..60),
        start in 0.0f64..5.0,
        span in 0.1f64..20.0,
    ) {
        prop_assume!(values.iter().any(|&v| v > 0.0));
        let grid = TimeGrid::new(start, start + span, values.len()).unwrap();
        let c = FluxCurve::new(grid, values.clone(), FluxKind::FpFirstArrival).unwrap();
        let doubled = FluxCurve::new(grid, values.iter().map(|v| 2.0 * v).collect(), FluxKind::BohmianJ).unwrap();
        let report = normalize_and_compare(&[("a", &c), ("b", &doubled)]).unwrap();
        for curve in &report.curves {
            let integral = curve.values.iter().sum::<f64>() * grid.width();
            prop_assert!((integral - 1.0).abs() < 1e-9);
        }
        // Normalisation removes the overall scale.
        prop_assert!(report.pair("a", "b").unwrap().linf < 1e-9);
    }
}
