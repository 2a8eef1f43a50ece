#![no_main]

use growthfront::metric::{SurfaceMetric, TailModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(samples) = growthfront::export::parse_metric_table(text) {
            if let Ok(m) = SurfaceMetric::tabulated(&samples, TailModel::Unknown) {
                _ = m.eval_g(0.5);
            }
        }
    }
});
