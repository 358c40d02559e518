use maskbnn::adders::AdderTopology;
use maskbnn::analysis::{probing_check, tvla_first_order, ProbeMode};
use maskbnn::bnn::{regfile_depth, toy_model, ScheduleConfig, Shuffle};
use maskbnn::leakage::{
    default_fixed_input, read_traceset, write_traceset, Campaign, CampaignConfig, LeakModel,
    Variant,
};
use maskbnn::masked_gates::{trichina_sync, ShareWord, TRICHINA_LATENCY};
use maskbnn::netlist::NetlistBuilder;
use maskbnn::prng::PrngMode;

fn campaign(variant: Variant, n: u64, key: u8) -> Campaign {
    let model = toy_model(3, 16, regfile_depth(AdderTopology::Ksa, 12), 4, 8, 12).unwrap();
    let (key, base_iv) = ([key; 10], [0; 10]);
    let fixed_input = default_fixed_input(&variant, Some(&model), &key, &base_iv).unwrap();
    Campaign::new(
        Some(&model),
        CampaignConfig {
            variant,
            n_traces: n,
            leak: LeakModel::with_sigma(1.0),
            key,
            base_iv,
            fixed_input,
            prng: PrngMode::Trivium,
        },
    )
    .unwrap()
}

#[test]
fn unmasked_campaign_roundtrips_through_file_and_leaks() {
    let c = campaign(Variant::Unmasked, 300, 5);
    let set = c.collect().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("u.sctr");
    write_traceset(&path, &set).unwrap();
    let back = read_traceset(&path).unwrap();
    assert_eq!(back.n_samples, set.n_samples);
    for (a, b) in set.traces.iter().zip(&back.traces) {
        assert_eq!(a.label, b.label);
        assert_eq!(a.samples, b.samples);
    }
    let r = tvla_first_order(&back).unwrap();
    assert!(!r.passed(), "max |t| {}", r.max_abs_t);
}

#[test]
fn masked_campaign_hides_hidden_layers() {
    let variant = Variant::Masked {
        topology: AdderTopology::Ksa,
        schedule: ScheduleConfig {
            throughput_optimized: true,
            shuffle: Shuffle::Off,
        },
    };
    let c = campaign(variant, 512, 6);
    let (_, rest) = c.layer_windows();
    let r = tvla_first_order(&c.collect().unwrap()).unwrap();
    assert!(r.max_abs_in(rest) < r.threshold, "{}", r.max_abs_t);
}

#[test]
fn chained_sync_gadgets_are_probing_secure() {
    let mut b = NetlistBuilder::new();
    let x = ShareWord::input(&mut b, "a", 1).unwrap().bits[0];
    let y = ShareWord::input(&mut b, "b", 1).unwrap().bits[0];
    let z = ShareWord::input(&mut b, "c", 1).unwrap().bits[0];
    let (r0, r1) = (b.random(), b.random());
    let xy = trichina_sync(&mut b, x, y, r0).unwrap();
    let zd = z.delay(&mut b, TRICHINA_LATENCY);
    let out = trichina_sync(&mut b, xy, zd, r1).unwrap();
    b.output("o0", &[out.share0]);
    b.output("o1", &[out.share1]);
    let nl = b.finish().unwrap();
    let pairs = [("a0", "a1"), ("b0", "b1"), ("c0", "c1")];
    for mode in [ProbeMode::Settled, ProbeMode::Transient] {
        let r = probing_check(&nl, &pairs, &[], 2 * TRICHINA_LATENCY + 2, mode).unwrap();
        assert!(r.is_secure(), "{mode:?}: {:?}", r.violating);
    }
}

#[test]
fn recombined_shares_are_flagged() {
    let mut b = NetlistBuilder::new();
    let x = ShareWord::input(&mut b, "a", 1).unwrap().bits[0];
    let open = b.xor(x.share0, x.share1);
    let q = b.reg(open);
    b.output("o", &[q]);
    let nl = b.finish().unwrap();
    let r = probing_check(&nl, &[("a0", "a1")], &[], 2, ProbeMode::Settled).unwrap();
    assert_eq!(r.violating, vec![open, q]);
    assert!(!r.witnesses.is_empty());
}
