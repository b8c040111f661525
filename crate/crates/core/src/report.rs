//! CSV and metadata outputs. Headers are fixed; rows are emitted in interval
//! then VM order so identical runs produce identical files.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use crate::classifier::AccessClass;
use crate::config::KeyValues;
use crate::orchestrator::{IntervalReport, RunConfig, RunSummary};
use crate::rdist::{hit_ratio_fn, DistanceMode, ReuseProfile};
use crate::trace::VmId;
use crate::Result;

pub const CLASSES_HEADER: &str = "vm_id,interval,CR,CW,RAR,RAW,WAR,WAW";
pub const HIST_HEADER: &str = "vm_id,mode,distance,count";
pub const HRF_HEADER: &str = "vm_id,breakpoint_blocks,hit_ratio";
pub const SIM_HEADER: &str =
    "vm_id,interval,size_blocks,policy,read_hits,read_misses,ssd_writes,hdd_reads,hdd_writes,latency_us";
pub const PLAN_HEADER: &str = "interval,vm_id,demand_blocks,alloc_blocks,feasible";
pub const POLICY_HEADER: &str = "interval,vm_id,write_ratio,policy";
pub const COMPARE_HEADER: &str =
    "vm_id,hit_ratio_cand,hit_ratio_base,mean_latency_us_cand,mean_latency_us_base,\
alloc_blocks_cand,alloc_blocks_base,ppc_ratio,ssd_writes_cand,ssd_writes_base,ssd_writes_ratio";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn classes_csv(reports: &[IntervalReport]) -> String {
    let mut s = format!("{CLASSES_HEADER}\n");
    for r in reports {
        for v in &r.vms {
            let c = &v.class_counts;
            let _ = write!(s, "{},{}", v.vm_id, r.interval);
            for class in AccessClass::ALL {
                let _ = write!(s, ",{}", c[class]);
            }
            s.push('\n');
        }
    }
    s
}

pub fn sim_csv(reports: &[IntervalReport]) -> String {
    let mut s = format!("{SIM_HEADER}\n");
    for r in reports {
        for v in &r.vms {
            let m = &v.sim;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                v.vm_id,
                r.interval,
                v.alloc_blocks,
                v.policy,
                m.read_hits,
                m.read_misses,
                m.ssd_writes,
                m.hdd_reads,
                m.hdd_writes,
                m.latency_total_us
            );
        }
    }
    s
}

pub fn plan_csv(reports: &[IntervalReport]) -> String {
    let mut s = format!("{PLAN_HEADER}\n");
    for r in reports {
        for v in &r.vms {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.interval, v.vm_id, v.demand_blocks, v.next_alloc_blocks, r.feasible
            );
        }
    }
    s
}

pub fn policy_csv(reports: &[IntervalReport]) -> String {
    let mut s = format!("{POLICY_HEADER}\n");
    for r in reports {
        for v in &r.vms {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                r.interval,
                v.vm_id,
                opt(v.write_ratio),
                v.next_policy
            );
        }
    }
    s
}

pub fn hist_csv(profiles: &[(VmId, ReuseProfile)]) -> String {
    let mut s = format!("{HIST_HEADER}\n");
    for (vm, p) in profiles {
        for mode in [DistanceMode::Trd, DistanceMode::Urd] {
            for (d, n) in &p.histogram(mode).counts {
                let _ = writeln!(s, "{vm},{mode},{d},{n}");
            }
        }
    }
    s
}

pub fn hrf_csv(profiles: &[(VmId, ReuseProfile)], mode: DistanceMode) -> String {
    let mut s = format!("{HRF_HEADER}\n");
    for (vm, p) in profiles {
        for (m, h) in hit_ratio_fn(p, mode).steps() {
            let _ = writeln!(s, "{vm},{m},{h}");
        }
    }
    s
}

pub fn run_meta(
    cfg: &RunConfig,
    reports: &[IntervalReport],
    timings: Option<&[Duration]>,
) -> String {
    let mut kv = config_to_kv(cfg);
    kv.insert("intervals", reports.len());
    kv.insert("vm_count", reports.first().map_or(0, |r| r.vms.len()));
    if let Some(t) = timings {
        let total: Duration = t.iter().sum();
        kv.insert("elapsed_us", total.as_micros());
        let per: Vec<String> = t.iter().map(|d| d.as_micros().to_string()).collect();
        kv.insert("interval_elapsed_us", per.join(","));
    }
    kv.render()
}

/// The run configuration in the same key-value form the CLI reads.
pub fn config_to_kv(cfg: &RunConfig) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.insert("interval_ticks", cfg.interval_ticks);
    kv.insert("mode", cfg.mode);
    kv.insert("capacity_blocks", cfg.capacity_blocks);
    kv.insert("block_size_bytes", cfg.block_size_bytes);
    kv.insert("wthreshold", cfg.wthreshold);
    kv.insert("cmin", cfg.c_min);
    kv.insert("t_hdd_us", cfg.t_hdd_us);
    kv.insert("t_ssd_us", cfg.t_ssd_us);
    kv.insert("seed", cfg.seed);
    let ro: Vec<String> = cfg.force_ro.iter().map(u16::to_string).collect();
    kv.insert("force_ro", ro.join(","));
    kv
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let mut f = fs::File::create(dir.join(name))?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Writes `run.meta`, `classes.csv`, `plan.csv`, `policy.csv` and `sim.csv`.
/// Wall-clock timings go into `run.meta` only when given.
pub fn write_run_dir(
    dir: &Path,
    cfg: &RunConfig,
    reports: &[IntervalReport],
    timings: Option<&[Duration]>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_file(dir, "run.meta", &run_meta(cfg, reports, timings))?;
    write_file(dir, "classes.csv", &classes_csv(reports))?;
    write_file(dir, "plan.csv", &plan_csv(reports))?;
    write_file(dir, "policy.csv", &policy_csv(reports))?;
    write_file(dir, "sim.csv", &sim_csv(reports))?;
    Ok(())
}

fn ratio(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    }
}

/// Per-VM and aggregate comparison of a candidate run against a baseline.
/// Allocation columns sum each VM's allocation over its active intervals.
pub fn compare_csv(cand: &RunSummary, base: &RunSummary) -> String {
    let mut s = format!("{COMPARE_HEADER}\n");
    let mut vms: Vec<VmId> = cand
        .per_vm
        .keys()
        .chain(base.per_vm.keys())
        .copied()
        .collect();
    vms.sort_unstable();
    vms.dedup();
    let empty = Default::default();
    let rows = vms
        .iter()
        .map(|vm| {
            (
                vm.to_string(),
                cand.per_vm.get(vm).unwrap_or(&empty),
                base.per_vm.get(vm).unwrap_or(&empty),
                None,
            )
        })
        .chain(std::iter::once((
            "all".to_string(),
            &cand.total,
            &base.total,
            ratio(cand.mean_perf_per_cost(), base.mean_perf_per_cost()),
        )));
    for (label, c, b, ppc_override) in rows {
        let ppc_ratio = ppc_override.or_else(|| ratio(c.perf_per_cost(), b.perf_per_cost()));
        let _ = writeln!(
            s,
            "{label},{},{},{},{},{},{},{},{},{},{}",
            c.sim.read_hit_ratio(),
            b.sim.read_hit_ratio(),
            opt(c.sim.mean_latency_us()),
            opt(b.sim.mean_latency_us()),
            c.alloc_block_intervals,
            b.alloc_block_intervals,
            opt(ppc_ratio),
            c.sim.ssd_writes,
            b.sim.ssd_writes,
            opt(ratio(
                Some(c.sim.ssd_writes as f64),
                Some(b.sim.ssd_writes as f64)
            )),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::classify;
    use crate::orchestrator::run;
    use crate::trace::synth::example_trace;
    use std::collections::BTreeMap;

    fn reports() -> (RunConfig, Vec<IntervalReport>) {
        let cfg = RunConfig {
            interval_ticks: 10,
            capacity_blocks: 100,
            c_min: 1,
            ..RunConfig::default()
        };
        let traces = BTreeMap::from([(0, example_trace(0, 3, 10).unwrap())]);
        let r = run(&traces, &cfg).unwrap();
        (cfg, r)
    }

    #[test]
    fn headers_and_row_counts() {
        let (_, r) = reports();
        for (csv, header) in [
            (classes_csv(&r), CLASSES_HEADER),
            (sim_csv(&r), SIM_HEADER),
            (plan_csv(&r), PLAN_HEADER),
            (policy_csv(&r), POLICY_HEADER),
        ] {
            let lines: Vec<&str> = csv.lines().collect();
            assert_eq!(lines[0], header);
            assert_eq!(lines.len(), 4);
            let cols = header.split(',').count();
            assert!(lines.iter().all(|l| l.split(',').count() == cols));
        }
        assert!(plan_csv(&r)
            .lines()
            .nth(2)
            .unwrap()
            .starts_with("1,0,2,2,true"));
    }

    #[test]
    fn hist_and_hrf_for_example() {
        let p = ReuseProfile::build(&classify(&example_trace(0, 1, 10).unwrap()).unwrap()).unwrap();
        let profiles = vec![(0, p)];
        assert_eq!(
            hist_csv(&profiles),
            format!("{HIST_HEADER}\n0,TRD,1,1\n0,TRD,4,1\n0,URD,1,1\n")
        );
        assert_eq!(
            hrf_csv(&profiles, DistanceMode::Urd),
            format!("{HRF_HEADER}\n0,2,{}\n", 1.0 / 7.0)
        );
    }

    #[test]
    fn self_comparison_ratios_are_one() {
        let (_, r) = reports();
        let s = RunSummary::from_reports(&r);
        let csv = compare_csv(&s, &s);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        for line in &lines[1..] {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[7], "1");
            assert_eq!(f[10], "1");
        }
    }

    #[test]
    fn meta_round_trips_through_key_values() {
        let (cfg, r) = reports();
        let kv = KeyValues::parse(&run_meta(&cfg, &r, None)).unwrap();
        assert_eq!(kv.get("mode"), Some("eci"));
        assert_eq!(kv.get("intervals"), Some("3"));
        assert_eq!(kv.get("elapsed_us"), None);
    }
}
