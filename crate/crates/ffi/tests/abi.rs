use std::ffi::{CStr, CString};
use std::ptr;

use flare_ffi::*;

fn last_error() -> String {
    let p = flare_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn channel_functions() {
    let mut v = 0.0;
    assert_eq!(
        unsafe { flare_los_probability(std::f64::consts::FRAC_PI_2, &mut v) },
        FlareStatus::Ok
    );
    assert!(v > 0.99 && v < 1.0);
    assert_eq!(
        unsafe { flare_los_probability(-1.0, &mut v) },
        FlareStatus::InvalidArgument
    );
    assert!(last_error().contains("elevation"));
    assert_eq!(
        unsafe { flare_los_probability(0.5, ptr::null_mut()) },
        FlareStatus::NullPointer
    );

    let mut p = 0.0;
    assert_eq!(
        unsafe { flare_effective_power(0.1, 0.0, 300.0, &mut p) },
        FlareStatus::Ok
    );
    let mut rate = 0.0;
    assert_eq!(
        unsafe { flare_achievable_rate(1.8e4, p, 0.0, 4e-15, &mut rate) },
        FlareStatus::Ok
    );
    assert!((rate - 3.568e5).abs() < 1e3, "{rate}");
    assert_eq!(
        unsafe { flare_achievable_rate(1.8e4, p, 0.0, 0.0, &mut rate) },
        FlareStatus::InvalidArgument
    );
}

#[test]
fn oracle_codes() {
    let mut p = 0.0;
    unsafe { flare_effective_power(0.1, 0.0, 300.0, &mut p) };
    let mut n = 0u32;
    assert_eq!(
        unsafe { flare_oracle_min_blocks(p, 0.0, 4e-15, 1.8e4, 5e6, 200, &mut n) },
        FlareStatus::Ok
    );
    assert_eq!(n, 15);
    n = 7;
    assert_eq!(
        unsafe { flare_oracle_min_blocks(0.0, 0.0, 4e-15, 1.8e4, 5e6, 200, &mut n) },
        FlareStatus::Infeasible
    );
    assert_eq!(n, 7);
    assert_eq!(
        unsafe { flare_oracle_min_blocks(1e-15, 0.0, 4e-15, 1.8e4, 5e6, 200, &mut n) },
        FlareStatus::Infeasible
    );
    assert!(last_error().contains("blocks"));
}

#[test]
fn simulation_handle_lifecycle() {
    let text = CString::new("profile = desk\nepisodes = 1\nsteps = 5\nwarmup = 64\nbatch_size = 4\n").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { flare_simulation_new(text.as_ptr(), FlareMethod::Flare, 3, &mut sim) },
        FlareStatus::Ok
    );
    assert!(!sim.is_null());
    let (mut served, mut k) = (u32::MAX, 0u32);
    for _ in 0..2 {
        assert_eq!(
            unsafe { flare_simulation_step(sim, &mut served, &mut k) },
            FlareStatus::Ok
        );
        assert!(served <= 30 && (1..=5).contains(&k));
    }
    let mut next = 0;
    assert_eq!(unsafe { flare_simulation_next_frame(sim, &mut next) }, FlareStatus::Ok);
    assert_eq!(next, 2);
    let (mut steps, mut violations) = (0, 1);
    assert_eq!(
        unsafe { flare_simulation_audit(sim, &mut steps, &mut violations) },
        FlareStatus::Ok
    );
    assert_eq!((steps, violations), (10, 0));
    unsafe { flare_simulation_free(sim) };
    unsafe { flare_simulation_free(ptr::null_mut()) };
}

#[test]
fn bad_config_names_the_key() {
    let text = CString::new("gamma = 2\n").unwrap();
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe { flare_simulation_new(text.as_ptr(), FlareMethod::Static, 1, &mut sim) },
        FlareStatus::Config
    );
    assert!(sim.is_null());
    assert!(last_error().contains("gamma"));
    assert_eq!(
        unsafe { flare_simulation_new(ptr::null(), FlareMethod::Static, 1, &mut sim) },
        FlareStatus::NullPointer
    );
    assert_eq!(
        unsafe { flare_simulation_step(ptr::null_mut(), ptr::null_mut(), ptr::null_mut()) },
        FlareStatus::NullPointer
    );
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(flare_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/flare.h")).unwrap();
    for name in [
        "FLARE_STATUS_OK",
        "FLARE_STATUS_INFEASIBLE",
        "FLARE_METHOD_MADDPG_ONLY",
        "typedef struct FlareSimulation FlareSimulation",
        "flare_simulation_new",
        "flare_simulation_step",
        "flare_simulation_free",
        "flare_oracle_min_blocks",
        "flare_last_error",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}
