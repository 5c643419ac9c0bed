//! Orders findings by severity and source/sink distance, then truncates to a
//! cutoff.

use std::cmp::Ordering;

use crate::ir::ControlDependence;
use crate::taint::{Finding, HopKind, SourceSite};

/// 1 when the witness crosses a function boundary.
pub fn call_distance(f: &Finding) -> u8 {
    u8::from(f.hops.contains(&HopKind::Call))
}

/// Region-tree distance between source and sink within their shared
/// function. `None` for interprocedural findings.
pub fn control_distance(f: &Finding, cd: &ControlDependence) -> Option<usize> {
    if call_distance(f) != 0 || f.source.func() != f.sink.func {
        return None;
    }
    let src_block = match &f.source {
        SourceSite::Inst(s) => s.block,
        SourceSite::Param { .. } => 0,
    };
    Some(cd.distance(src_block, f.sink.block))
}

fn key_cmp(a: &Finding, b: &Finding) -> Ordering {
    // `None` sorts after every defined distance.
    let cd = |f: &Finding| f.control_distance.map_or((1, 0), |d| (0, d));
    b.severity
        .cmp(&a.severity)
        .then(a.call_distance.cmp(&b.call_distance))
        .then(cd(a).cmp(&cd(b)))
        .then_with(|| a.source.cmp(&b.source))
        .then_with(|| a.sink.cmp(&b.sink))
        .then_with(|| a.rule.cmp(&b.rule))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedReport {
    pub findings: Vec<Finding>,
    pub cutoff: Option<usize>,
}

/// Stable sort by (severity desc, call distance asc, control distance asc,
/// source site, sink site), keeping at most `cutoff` entries.
pub fn rank_findings(mut fs: Vec<Finding>, cutoff: Option<usize>) -> RankedReport {
    fs.sort_by(key_cmp);
    if let Some(n) = cutoff {
        fs.truncate(n);
    }
    RankedReport { findings: fs, cutoff }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{InstRef, Site};

    fn finding(sev: u8, call: u8, ctl: Option<usize>, idx: usize) -> Finding {
        Finding {
            rule: "r".into(),
            severity: sev,
            source: SourceSite::Inst(Site::new("main", InstRef::new(0, idx))),
            sink: Site::new("main", InstRef::new(0, idx + 1)),
            path: vec![],
            hops: if call == 1 { vec![HopKind::Call] } else { vec![] },
            call_distance: call,
            control_distance: ctl,
        }
    }

    #[test]
    fn severity_dominates() {
        let r = rank_findings(
            vec![finding(3, 0, Some(0), 0), finding(9, 0, Some(0), 1), finding(5, 0, Some(0), 2)],
            None,
        );
        let sev: Vec<u8> = r.findings.iter().map(|f| f.severity).collect();
        assert_eq!(sev, [9, 5, 3]);
    }

    #[test]
    fn intraprocedural_ranks_above_interprocedural() {
        let r = rank_findings(vec![finding(5, 1, None, 0), finding(5, 0, Some(4), 1)], None);
        assert_eq!(r.findings[0].call_distance, 0);
    }

    #[test]
    fn cutoff_truncates() {
        let fs = vec![finding(1, 0, None, 0), finding(2, 0, None, 1), finding(3, 0, None, 2)];
        assert_eq!(rank_findings(fs, Some(1)).findings.len(), 1);
    }

    #[test]
    fn call_distance_reads_hops() {
        let mut f = finding(1, 0, None, 0);
        f.hops = vec![HopKind::Heap, HopKind::Scalar];
        assert_eq!(call_distance(&f), 0);
        f.hops.push(HopKind::Call);
        assert_eq!(call_distance(&f), 1);
    }
}
