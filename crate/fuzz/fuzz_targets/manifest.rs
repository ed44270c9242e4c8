#![no_main]
use hklin::analysis::io::{manifest_csv_string, parse_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(entries) = parse_manifest(data) {
        if entries.iter().all(|e| !e.file.contains([',', '\n', '\r', '"', '#']) && e.file.trim() == e.file) {
            let again = parse_manifest(&manifest_csv_string(&entries, &[])).expect("serialized manifest re-parses");
            assert_eq!(again, entries);
        }
    }
});
