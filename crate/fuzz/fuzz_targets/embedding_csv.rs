#![no_main]
use hklin::analysis::io::parse_embedding_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(table) = parse_embedding_csv(data) {
        assert_eq!(table.rows.ncols(), table.header.dim);
        if let Some(labels) = &table.labels {
            assert_eq!(labels.len(), table.rows.nrows());
        }
    }
});
