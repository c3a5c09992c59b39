#![no_main]

use copula_ot::{validate_plan, TransportPlan};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    let Ok(plan) = TransportPlan::from_json_str(data) else {
        return;
    };
    let (source, target) = (plan.source(), plan.target());
    assert!(validate_plan(&plan, &source, &target));
});
