#![no_main]
use hklin::measure::io::{grid_csv_string, parse_grid_csv, parse_measure, MeasureFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let _ = parse_measure(data, MeasureFormat::detect(data));
    if let Ok(img) = parse_grid_csv(data) {
        assert_eq!(img.values.len(), img.grid.rows * img.grid.cols);
        let again = parse_grid_csv(&grid_csv_string(&img, &[])).expect("serialized grid re-parses");
        assert_eq!(again, img);
    }
});
