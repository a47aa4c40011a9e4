#![no_main]
use evqr::{gaussian_dual_value, GaussianModel};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = GaussianModel::from_json(s) {
        // Malformed models must be rejected, not panic.
        if model.d_x() <= 8 && model.d_y() <= 8 {
            let _ = gaussian_dual_value(&model);
        }
    }
});
