#![no_main]
use hklin::measure::io::{parse_points_csv, points_csv_string};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(mu) = parse_points_csv(data) {
        assert!(mu.masses().iter().all(|&m| m >= 0.0 && m.is_finite()));
        if let Ok(text) = points_csv_string(&mu, &[]) {
            let again = parse_points_csv(&text).expect("serialized points re-parse");
            assert_eq!(again.coords(), mu.coords());
            assert_eq!(again.masses(), mu.masses());
        }
    }
});
