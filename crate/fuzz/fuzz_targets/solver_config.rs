#![no_main]
use hklin::SolverConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(cfg) = SolverConfig::parse(data) {
        let again = SolverConfig::parse(&cfg.to_string()).expect("displayed config re-parses");
        assert_eq!(again, cfg);
    }
});
