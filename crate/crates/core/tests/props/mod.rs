//! Generated-case checks of the protocol, crypto, bus and battery invariants,
//! shared by the property and acceptance targets.

use bessim::battery::{
    DegradationRates, Pack, Thresholds, CAPACITY_FLOOR, DEEP_RESERVE, MAX_DEGRADATION_FACTOR,
};
use bessim::bctrl::{evaluate, Branches, CellReadings, DdtTrips, PatchSet};
use bessim::bus::{
    establish, NodeId, PacketType, Psk, RateLimiter, SecureError, UartFrame, MAX_PAYLOAD,
    MAX_PLAINTEXT,
};
use bessim::fwpipe::sign::{derive_signing_key, sign, verify};
use bessim::fwpipe::{
    tea, verify_and_install, FirmwareImage, InstallContext, InstallRejection, KeyMaterial,
    SigningPolicy, Target,
};
use bessim::simkern::Profile;
use proptest::prelude::*;

const CASES: u32 = 1000;

fn ptype() -> impl Strategy<Value = PacketType> {
    prop_oneof![
        Just(PacketType::Read),
        Just(PacketType::Write),
        Just(PacketType::UpdateCtl),
        Just(PacketType::Notify),
    ]
}

fn frame(max_payload: usize) -> impl Strategy<Value = UartFrame> {
    (
        any::<u8>(),
        any::<u8>(),
        ptype(),
        any::<u8>(),
        prop::collection::vec(any::<u8>(), 0..=max_payload),
    )
        .prop_map(|(s, r, t, c, p)| UartFrame::new(NodeId(s), NodeId(r), t, c, p))
}

fn target() -> impl Strategy<Value = Target> {
    prop_oneof![Just(Target::Bts), Just(Target::Drv), Just(Target::Bctrl)]
}

proptest! {
    // Shrunk counterexamples are printed; nothing is written next to the sources.
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    fn codec_roundtrips(f in frame(MAX_PAYLOAD), wrapped in any::<bool>()) {
        let mut f = f;
        f.wrapped = wrapped;
        let bytes = f.encode().unwrap();
        let back = UartFrame::decode(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.encode().unwrap(), bytes);
    }

    fn codec_rejects_any_single_byte_change(f in frame(MAX_PAYLOAD), pos in any::<prop::sample::Index>(), delta in 1u8..=255) {
        let mut bytes = f.encode().unwrap();
        let i = pos.index(bytes.len());
        bytes[i] = bytes[i].wrapping_add(delta);
        prop_assert!(UartFrame::decode(&bytes).is_err());
    }

    fn codec_rejects_oversize(f in frame(0), extra in 1usize..64) {
        let mut f = f;
        f.payload = vec![0; MAX_PAYLOAD + extra];
        prop_assert!(f.encode().is_err());
    }

    fn secure_roundtrip(payloads in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..=MAX_PLAINTEXT), 1..8),
                        psk in any::<[u8; 16]>(), ca in any::<[u8; 8]>(), cb in any::<[u8; 8]>()) {
        let (mut a, mut b) = establish(NodeId::BTS, NodeId::DRV, &Psk(psk), &Psk(psk), ca, cb).unwrap();
        for p in payloads {
            let f = UartFrame::new(NodeId::BTS, NodeId::DRV, PacketType::Write, 0x50, p);
            let w = a.wrap(&f).unwrap();
            prop_assert!(w.encode().is_ok());
            prop_assert_eq!(b.unwrap(&w).unwrap(), f);
        }
    }

    fn secure_rejects_tampering(p in prop::collection::vec(any::<u8>(), 0..=MAX_PLAINTEXT), bit in any::<prop::sample::Index>(),
                                psk in any::<[u8; 16]>()) {
        let (mut a, mut b) = establish(NodeId::BTS, NodeId::DRV, &Psk(psk), &Psk(psk), [1; 8], [2; 8]).unwrap();
        let w = a.wrap(&UartFrame::new(NodeId::BTS, NodeId::DRV, PacketType::Write, 0x50, p)).unwrap();
        // Flip one bit anywhere in the authenticated header or the envelope.
        let mut bytes = w.header().to_vec();
        bytes.extend_from_slice(&w.payload);
        let i = bit.index(bytes.len() * 8);
        bytes[i / 8] ^= 1 << (i % 8);
        let mut t = w.clone();
        t.sender = NodeId(bytes[0]);
        t.receiver = NodeId(bytes[1]);
        match PacketType::from_code(bytes[2] & 0x7F) {
            Some(pt) => {
                t.ptype = pt;
                t.wrapped = bytes[2] & 0x80 != 0;
            }
            None => return Ok(()), // the codec already refuses this type byte
        }
        t.command = bytes[3];
        t.payload = bytes[4..].to_vec();
        prop_assert!(b.unwrap(&t).is_err());
        // The untouched envelope still opens afterwards.
        prop_assert!(b.unwrap(&w).is_ok());
    }

    fn secure_rejects_replay(n in 1usize..6, replay in any::<prop::sample::Index>(), psk in any::<[u8; 16]>()) {
        let (mut a, mut b) = establish(NodeId::BCTRL, NodeId::DRV, &Psk(psk), &Psk(psk), [3; 8], [4; 8]).unwrap();
        let sent: Vec<UartFrame> = (0..n)
            .map(|i| a.wrap(&UartFrame::new(NodeId::BCTRL, NodeId::DRV, PacketType::Notify, 0x32, vec![i as u8])).unwrap())
            .collect();
        for w in &sent {
            b.unwrap(w).unwrap();
        }
        let old = &sent[replay.index(n)];
        let is_replay = matches!(b.unwrap(old), Err(SecureError::ReplayDetected { .. }));
        prop_assert!(is_replay);
    }

    fn secure_mismatched_psk_never_establishes(p1 in any::<[u8; 16]>(), p2 in any::<[u8; 16]>()) {
        prop_assume!(p1 != p2);
        prop_assert!(establish(NodeId::BTS, NodeId::BCTRL, &Psk(p1), &Psk(p2), [0; 8], [0; 8]).is_err());
    }

    fn tea_roundtrip(key in any::<[u8; 16]>(), m in prop::collection::vec(any::<u8>(), 0..600)) {
        let c = tea::encrypt(&key, &m);
        prop_assert_eq!(c.len() % 8, 0);
        prop_assert_eq!(tea::decrypt(&key, &c).unwrap(), m);
    }

    fn tea_wrong_key_fails_crc(k1 in any::<[u8; 16]>(), k2 in any::<[u8; 16]>(), m in prop::collection::vec(any::<u8>(), 1..400), t in target()) {
        prop_assume!(k1 != k2);
        let img = FirmwareImage::package(t, "9.9.9", &m, false, Some(&k1), None);
        let mut keys = KeyMaterial::device();
        keys.tea_key = k2;
        let r = verify_and_install(&img, &SigningPolicy::vulnerable(Profile::M365), &keys, &InstallContext::healthy());
        prop_assert_eq!(r.unwrap_err(), InstallRejection::CrcMismatch);
        keys.tea_key = k1;
        let ok = verify_and_install(&img, &SigningPolicy::vulnerable(Profile::M365), &keys, &InstallContext::healthy());
        prop_assert_eq!(ok.unwrap().plaintext, m);
    }

    fn ecdsa_rejects_any_single_bit_mutation(body in prop::collection::vec(any::<u8>(), 1..256), bit in any::<prop::sample::Index>(), t in target()) {
        let sk = derive_signing_key(b"property signer");
        let sig = sign(&sk, t, "1.0.0", &body);
        prop_assert!(verify(sk.verifying_key(), t, "1.0.0", &body, &sig));
        let mut m = body.clone();
        let i = bit.index(m.len() * 8);
        m[i / 8] ^= 1 << (i % 8);
        prop_assert!(!verify(sk.verifying_key(), t, "1.0.0", &m, &sig));
    }

    fn limiter_passes_steady_traffic(capacity in 2u32..32, rate in 1u32..=1000, n in 1u64..3000) {
        let mut l = RateLimiter::new(capacity, rate);
        // k-th frame at k/rate seconds rounded up to the next ms: exactly the
        // drain rate. The rounding jitters arrivals by under 1 ms, which a
        // one-token bucket cannot absorb, hence capacity >= 2.
        for k in 0..n {
            let t = (k * 1000).div_ceil(rate as u64);
            prop_assert!(l.admit(t), "frame {k} at {t} ms dropped");
        }
    }

    fn limiter_caps_bursts(capacity in 1u32..32, rate in 1u32..2000, burst in 1u32..200) {
        let mut l = RateLimiter::new(capacity, rate);
        let admitted = (0..capacity + burst).filter(|_| l.admit(0)).count() as u32;
        prop_assert_eq!(admitted, capacity);
    }

    fn discharge_conserves_charge(level in 20.0f64..100.0, weight in 1.0f64..1.2, steps in prop::collection::vec((0.0f64..5000.0, 1u64..5000), 1..20)) {
        let mut p: Pack<f64> = Pack::for_profile(Profile::M365).with_load_weight(2, weight);
        p.set_level(level);
        let q0 = p.total_charge();
        let wsum: f64 = p.load_weights.iter().sum();
        let parallel = p.spec.parallel_per_group as f64;
        for (load, dt) in steps {
            let before = p.total_charge();
            let drawn0 = p.drawn_mah;
            p.step_discharge(load, dt);
            let floor_hit = p.groups.iter().any(|g| g.charge <= -DEEP_RESERVE * g.nominal_capacity + 1e-9);
            if !floor_hit {
                let removed = before - p.total_charge();
                let expected = (p.drawn_mah - drawn0) / parallel * wsum;
                prop_assert!((removed - expected).abs() < 1e-6 * expected.max(1.0));
            }
        }
        prop_assert!(p.total_charge() <= q0);
    }

    fn balancing_conserves_charge(mvs in prop::collection::vec(3000.0f64..4200.0, 10), steps in 1usize..200) {
        let mut p: Pack<f64> = Pack::for_profile(Profile::Es3);
        for (g, v) in p.groups.iter_mut().zip(&mvs) {
            g.set_voltage(*v);
        }
        let q0 = p.total_charge();
        for _ in 0..steps {
            p.balance_step();
        }
        prop_assert!((p.total_charge() + p.dissipated_mah - q0).abs() < 1e-6);
    }

    fn charge_respects_effective_capacity(level in 0.0f64..100.0, cur in 1.0f64..5000.0, dt in 1u64..3_600_000, cap_frac in 0.75f64..1.0) {
        let mut p: Pack<f64> = Pack::for_profile(Profile::M365);
        p.set_level(level);
        for g in &mut p.groups {
            g.effective_capacity = cap_frac * g.nominal_capacity;
        }
        let before: Vec<f64> = p.groups.iter().map(|g| g.charge).collect();
        p.step_charge(cur, dt, 4200.0);
        for (g, b) in p.groups.iter().zip(before) {
            prop_assert!(g.charge >= b);
            prop_assert!(g.charge <= g.effective_capacity.max(b) + 1e-9);
        }
    }

    fn degradation_is_monotone(exposures in prop::collection::vec((0.0f64..4200.0, 1u64..600_000), 1..30), r1 in 0.0f64..2.0, r2 in 0.0f64..20.0) {
        let rates = DegradationRates { r1_per_hour: r1, r2_per_hour: r2.max(r1) };
        let mut p: Pack<f64> = Pack::for_profile(Profile::M365);
        for (mv, dt) in exposures {
            for g in &mut p.groups {
                g.set_voltage(mv);
            }
            let prev: Vec<_> = p.groups.clone();
            p.apply_undervolt_degradation(dt, &rates);
            for (g, o) in p.groups.iter().zip(&prev) {
                prop_assert!(g.effective_capacity <= o.effective_capacity + 1e-9);
                prop_assert!(g.degradation_factor >= o.degradation_factor - 1e-9);
                prop_assert!(g.degradation_factor <= MAX_DEGRADATION_FACTOR + 1e-9);
                prop_assert!(g.effective_capacity >= CAPACITY_FLOOR * g.nominal_capacity - 1e-9);
                prop_assert!(!o.dead || g.dead);
                if g.dead {
                    prop_assert_eq!(g.voltage, 0.0);
                    prop_assert!((g.degradation_factor - MAX_DEGRADATION_FACTOR).abs() < 1e-12);
                    prop_assert!((g.effective_capacity - CAPACITY_FLOOR * g.nominal_capacity).abs() < 1e-9);
                }
            }
        }
    }

    fn main_loop_branches_match_reference(v in prop::collection::vec(0.0f64..5000.0, 10), dct in any::<bool>(), dlb in any::<bool>(),
                                          ddt in any::<bool>(), c_lbd in 100u16..1500) {
        let th = Thresholds { c_lbd, ..Thresholds::default() };
        let patches = PatchSet { dct, dlb, ddt: ddt.then(DdtTrips::default), ..PatchSet::stock() };
        let got = evaluate(&CellReadings::from_voltages(&v), &th, &patches);

        // Straight transcription of the main loop: read, compare, act.
        let min = v.iter().cloned().fold(f64::MAX, f64::min);
        let max = v.iter().cloned().fold(f64::MIN, f64::max);
        let mut want = Branches::default();
        if !dlb && max - min >= c_lbd as f64 {
            want.balance = true;
            want.sleep_on_delta = true;
        }
        if !dct {
            if min < th.c_uvt as f64 {
                want.sleep_on_uv = true;
            }
            if max > th.c_ovt as f64 {
                want.sleep_on_ov = true;
            }
        }
        prop_assert_eq!(got, want);
    }
}

/// Every suite by name; each panics on a counterexample.
pub const ALL: &[(&str, fn())] = &[
    ("codec_roundtrips", codec_roundtrips),
    (
        "codec_rejects_any_single_byte_change",
        codec_rejects_any_single_byte_change,
    ),
    ("codec_rejects_oversize", codec_rejects_oversize),
    ("secure_roundtrip", secure_roundtrip),
    ("secure_rejects_tampering", secure_rejects_tampering),
    ("secure_rejects_replay", secure_rejects_replay),
    (
        "secure_mismatched_psk_never_establishes",
        secure_mismatched_psk_never_establishes,
    ),
    ("tea_roundtrip", tea_roundtrip),
    ("tea_wrong_key_fails_crc", tea_wrong_key_fails_crc),
    (
        "ecdsa_rejects_any_single_bit_mutation",
        ecdsa_rejects_any_single_bit_mutation,
    ),
    (
        "limiter_passes_steady_traffic",
        limiter_passes_steady_traffic,
    ),
    ("limiter_caps_bursts", limiter_caps_bursts),
    ("discharge_conserves_charge", discharge_conserves_charge),
    ("balancing_conserves_charge", balancing_conserves_charge),
    (
        "charge_respects_effective_capacity",
        charge_respects_effective_capacity,
    ),
    ("degradation_is_monotone", degradation_is_monotone),
    (
        "main_loop_branches_match_reference",
        main_loop_branches_match_reference,
    ),
];

#[allow(dead_code)] // only the per-suite target looks suites up by name
pub fn run(name: &str) {
    let (_, f) = ALL.iter().find(|(n, _)| *n == name).expect("known suite");
    f();
}
