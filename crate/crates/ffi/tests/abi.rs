use std::ffi::{c_char, CString};
use std::ptr;

use metadr::env::{self, EnvConfig, OfficeEnv, PersonKind, RewardConfig, TaskSpec};
use metadr_ffi::*;

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { mdr_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    let bytes: Vec<u8> = buf.iter().take_while(|&&c| c != 0).map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

fn new_policy(seed: u64) -> *mut MdrPolicy {
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { mdr_policy_new_random(30, 10, seed, &mut p) }, MdrStatus::Ok);
    p
}

#[test]
fn policy_forward_and_round_trip() {
    let p = new_policy(4);
    unsafe {
        assert_eq!(mdr_policy_obs_dim(p), 30);
        assert_eq!(mdr_policy_act_dim(p), 10);
        let obs = [0.5; 30];
        let (mut mean, mut value) = ([0.0; 10], 0.0);
        assert_eq!(mdr_policy_forward(p, obs.as_ptr(), 30, mean.as_mut_ptr(), 10, &mut value), MdrStatus::Ok);

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.omck").to_str().unwrap()).unwrap();
        assert_eq!(mdr_policy_save(p, path.as_ptr(), 12), MdrStatus::Ok);
        let mut q = ptr::null_mut();
        assert_eq!(mdr_policy_load(path.as_ptr(), &mut q), MdrStatus::Ok);
        let (mut mean2, mut value2) = ([0.0; 10], 0.0);
        assert_eq!(mdr_policy_forward(q, obs.as_ptr(), 30, mean2.as_mut_ptr(), 10, &mut value2), MdrStatus::Ok);
        assert_eq!(mean, mean2);
        assert_eq!(value.to_bits(), value2.to_bits());
        mdr_policy_free(p);
        mdr_policy_free(q);
        mdr_policy_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    let p = new_policy(1);
    unsafe {
        let obs = [0.0; 29];
        let (mut mean, mut value) = ([0.0; 10], 0.0);
        let s = mdr_policy_forward(p, obs.as_ptr(), 29, mean.as_mut_ptr(), 10, &mut value);
        assert_eq!(s, MdrStatus::ShapeMismatch);
        assert!(last_error().contains("expected 30"), "{}", last_error());
        let s = mdr_policy_forward(ptr::null(), obs.as_ptr(), 29, mean.as_mut_ptr(), 10, &mut value);
        assert_eq!(s, MdrStatus::NullPointer);
        assert!(last_error().contains("policy"));

        let missing = CString::new("/nonexistent/x.omck").unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(mdr_policy_load(missing.as_ptr(), &mut q), MdrStatus::Io);
        assert!(q.is_null());

        let dir = tempfile::tempdir().unwrap();
        let junk = dir.path().join("junk.omck");
        std::fs::write(&junk, b"not a checkpoint").unwrap();
        let junk = CString::new(junk.to_str().unwrap()).unwrap();
        assert_eq!(mdr_policy_load(junk.as_ptr(), &mut q), MdrStatus::BadCheckpoint);

        assert_eq!(mdr_policy_new_random(0, 10, 1, &mut q), MdrStatus::InvalidArgument);
        mdr_clear_error();
        assert_eq!(mdr_last_error_message(ptr::null_mut(), 0), 0);
        mdr_policy_free(p);
    }
}

#[test]
fn error_message_truncates_with_terminator() {
    unsafe {
        let mut q = ptr::null_mut();
        mdr_policy_new_random(0, 0, 1, &mut q);
        let mut buf = [1 as c_char; 5];
        let full = mdr_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(full > 5);
        assert_eq!(buf[4], 0);
    }
}

#[test]
fn env_step_matches_library() {
    let task = TaskSpec {
        person: PersonKind::CurtailAndShift,
        multiplier: 1.0,
        baseline_seed: 2021,
        price_seed: 2022,
    };
    let mut lib_env = OfficeEnv::new(task, &EnvConfig::default()).unwrap();
    let mut e = ptr::null_mut();
    unsafe {
        assert_eq!(mdr_env_new(MdrPerson::CurtailAndShift, 1.0, 2021, 2022, &mut e), MdrStatus::Ok);
        let (od, ad) = (mdr_env_obs_dim(e), mdr_env_act_dim(e));
        assert_eq!((od, ad), (lib_env.obs_dim(), lib_env.act_dim()));
        let mut obs = vec![0.0; od];
        assert_eq!(mdr_env_reset(e, obs.as_mut_ptr(), od), MdrStatus::Ok);
        assert_eq!(obs, lib_env.reset());
        for day in 0..3 {
            let action: Vec<f64> = (0..ad).map(|h| ((h + day) % 4) as f64 * 2.5).collect();
            let (mut r, mut c, mut pen) = (0.0, 0.0, true);
            let s = mdr_env_step(e, action.as_ptr(), ad, obs.as_mut_ptr(), od, &mut r, &mut c, &mut pen);
            assert_eq!(s, MdrStatus::Ok);
            let want = lib_env.step(&action).unwrap();
            assert_eq!(obs, want.obs);
            assert_eq!((r, c, pen), (want.reward, want.info.cost, want.info.penalized));
        }
        let mut r = 0.0;
        let action = vec![0.0; ad];
        let s = mdr_env_step(e, action.as_ptr(), ad, obs.as_mut_ptr(), od, &mut r, ptr::null_mut(), ptr::null_mut());
        assert_eq!(s, MdrStatus::Ok);
        assert_eq!(mdr_env_reset(e, obs.as_mut_ptr(), od - 1), MdrStatus::ShapeMismatch);
        mdr_env_free(e);
    }
}

#[test]
fn pure_functions_match_library() {
    let points = [10.0, 0.0, 5.0, 5.0, 2.5, 0.0, 7.5, 10.0, 1.0, 3.0];
    let fixed = [40.0; 10];
    let curtail = [30.0; 10];
    let shift = [30.0; 10];
    let mut d = [0.0; 10];
    unsafe {
        let s = mdr_curtail_shift_response(
            fixed.as_ptr(),
            curtail.as_ptr(),
            shift.as_ptr(),
            points.as_ptr(),
            10,
            3,
            3,
            d.as_mut_ptr(),
        );
        assert_eq!(s, MdrStatus::Ok);
    }
    let person = env::CurtailShiftPerson {
        b_fixed: fixed.to_vec(),
        b_curtail: curtail.to_vec(),
        b_shift: shift.to_vec(),
        t_curtail: 3,
        t_shift: 3,
    };
    assert_eq!(d.to_vec(), env::curtail_shift_response(&person, &points).unwrap());
    assert_eq!(d.iter().sum::<f64>(), 1000.0 - 3.0 * 30.0);

    let base = [20.0; 10];
    let (lo, hi) = ([5.0; 10], [25.0; 10]);
    let mut lin = [0.0; 10];
    unsafe {
        let s = mdr_deterministic_response(
            MdrResponse::Linear,
            2.0,
            5.0,
            points.as_ptr(),
            base.as_ptr(),
            lo.as_ptr(),
            hi.as_ptr(),
            10,
            lin.as_mut_ptr(),
        );
        assert_eq!(s, MdrStatus::Ok);
    }
    let want: Vec<f64> = points.iter().map(|p| (20.0 - 2.0 * p).clamp(5.0, 25.0)).collect();
    assert_eq!(lin.to_vec(), want);

    let price = [0.1; 10];
    let (mut r, mut pen) = (0.0, false);
    unsafe {
        let s = mdr_reward(lin.as_ptr(), price.as_ptr(), base.as_ptr(), 10, 10.0, 0.5, &mut r, &mut pen);
        assert_eq!(s, MdrStatus::Ok);
    }
    let lib = env::compute_reward(&lin, &price, &base, &RewardConfig::default()).unwrap();
    assert_eq!((r, pen), (lib.reward, lib.penalized));

    let zero = [0.0; 10];
    unsafe {
        let s = mdr_reward(zero.as_ptr(), price.as_ptr(), base.as_ptr(), 10, 10.0, 0.5, &mut r, ptr::null_mut());
        assert_eq!(s, MdrStatus::Numeric);
    }
}
