use eci_core::classifier::classify;
use eci_core::orchestrator::{run, RunConfig, RunMode, RunSummary};
use eci_core::rdist::ReuseProfile;
use eci_core::report;
use eci_core::trace::{
    expand_multiblock, parse_msr, read_binary, split_by_vm, write_binary, VmMap,
};

// Two disks; the 16 KiB write at offset 4096 spans blocks 0..=2 with 8 KiB blocks.
const TRACE: &str = "\
100,host,0,Write,4096,16384,0
110,host,1,Read,0,8192,0
120,host,0,Read,8192,8192,0
130,host,1,Read,0,8192,0
250,host,0,Read,0,8192,0
260,host,0,Write,16384,0,0
270,host,1,Write,81920,8192,0
";

#[test]
fn msr_text_to_interval_reports() {
    let mut vms = VmMap::auto();
    let parsed = parse_msr(TRACE.as_bytes(), 8192, &mut vms).unwrap();
    assert_eq!(parsed.skipped_zero_size, 1);
    assert_eq!(parsed.requests[0].len_blocks, 3);

    let traces = split_by_vm(&parsed.requests);
    assert_eq!(traces.len(), 2);
    let cfg = RunConfig {
        interval_ticks: 100,
        capacity_blocks: 64,
        c_min: 2,
        ..RunConfig::default()
    };
    let reports = run(&traces, &cfg).unwrap();
    // Intervals are anchored at the first timestamp: [100, 200) and [200, 300).
    assert_eq!(reports.len(), 2);
    let blocks: u64 = reports
        .iter()
        .flat_map(|r| &r.vms)
        .map(|v| v.sim.requests())
        .sum();
    assert_eq!(blocks, 8);

    let plan = report::plan_csv(&reports);
    assert_eq!(plan.lines().count(), 1 + 2 * 2);
    let summary = RunSummary::from_reports(&reports);
    assert_eq!(summary.per_vm.len(), 2);
}

#[test]
fn binary_round_trip_preserves_profiles() {
    let mut vms = VmMap::auto();
    let reqs = expand_multiblock(
        &parse_msr(TRACE.as_bytes(), 8192, &mut vms)
            .unwrap()
            .requests,
    );
    let mut buf = Vec::new();
    write_binary(&mut buf, &reqs).unwrap();
    let back = read_binary(buf.as_slice()).unwrap();
    assert_eq!(back, reqs);
    for stream in split_by_vm(&back).values() {
        let a = ReuseProfile::build(&classify(stream).unwrap()).unwrap();
        let b = ReuseProfile::build(&classify(stream).unwrap()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn modes_share_inputs_but_not_plans() {
    let mut vms = VmMap::auto();
    let traces = split_by_vm(
        &parse_msr(TRACE.as_bytes(), 8192, &mut vms)
            .unwrap()
            .requests,
    );
    let base = RunConfig {
        interval_ticks: 100,
        capacity_blocks: 64,
        c_min: 0,
        ..RunConfig::default()
    };
    let eci = run(
        &traces,
        &RunConfig {
            mode: RunMode::Eci,
            ..base.clone()
        },
    )
    .unwrap();
    let trd = run(
        &traces,
        &RunConfig {
            mode: RunMode::TrdBaseline,
            ..base
        },
    )
    .unwrap();
    assert_eq!(eci.len(), trd.len());
    for (a, b) in eci.iter().zip(&trd) {
        for (va, vb) in a.vms.iter().zip(&b.vms) {
            assert_eq!(va.class_counts, vb.class_counts);
            assert!(va.demand_blocks <= vb.demand_blocks);
        }
    }
}
