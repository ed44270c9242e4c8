#![no_main]
use hklin::tangent::parse_tangent_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok((mu0, tf)) = parse_tangent_csv(data) {
        assert_eq!(tf.len(), mu0.len());
        assert_eq!(tf.alpha0.len(), mu0.len());
    }
});
