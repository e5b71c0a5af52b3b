//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p dsa-policy --test acceptance`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use dsa_policy::batch::bench;
use dsa_policy::capture::parse_capture_csv;
use dsa_policy::inputs::parse_requests;
use dsa_policy::shared::SharedStore;
use dsa_policy::synth;
use dsa_policy_core::dsl::{parse_policy_doc, serialize_policy_doc};
use dsa_policy_core::fixtures;
use dsa_policy_core::geo::{infer_within, point_in_region, GeoPoint, Region, RegionStore};
use dsa_policy_core::model::{
    Affiliation, Decision, Effect, FrequencyRange, Hz, Policy, PolicyId, RegionId, Restriction, SpectrumRequest,
    TimeWindow,
};
use dsa_policy_core::reasoner::{classify, evaluate, realize};
use dsa_policy_core::store::Snapshot;
use dsa_policy_core::taxonomy::{ClassEntry, Taxonomy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const US91: &str = include_str!("../fixtures/us91.policy");
const US91_LOCAL: &str = include_str!("../fixtures/us91_local.policy");
const CAPTURE: &str = include_str!("../fixtures/us91_capture.csv");
const REQUESTS: &str = include_str!("../fixtures/requests.jsonl");

const GOLDEN_BUDGET: Duration = Duration::from_secs(1);
const ORACLE_BUDGET: Duration = Duration::from_secs(60);
const LATENCY_BUDGET_MS: f64 = 10_000.0;
const HIERARCHIES: usize = 60;
const GEO_PAIRS: usize = 10_000;
const ROUNDTRIP_POLICIES: usize = 200;
const STORE_OPS: usize = 100;

type Verdict = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Verdict + 'a>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Discretized request universe: every request a grid cell, every bound on a lattice point.
mod grid {
    use super::*;

    pub const CLASSES: [(&str, &[&str]); 5] = [
        ("Radio", &[]),
        ("Military", &["Radio"]),
        ("Commercial", &["Radio"]),
        ("DualUse", &["Military", "Commercial"]),
        ("Sensor", &[]),
    ];
    pub const AFFILIATIONS: [Affiliation; 2] = [Affiliation::Federal, Affiliation::NonFederal];
    pub const FREQS: usize = 20;
    pub const REGIONS: usize = 5;
    /// Region interiors plus one point outside every region.
    pub const LOCATIONS: usize = REGIONS + 1;
    pub const TIMES: usize = 5;
    pub const CELLS: usize = CLASSES.len() * AFFILIATIONS.len() * FREQS * LOCATIONS * TIMES;

    #[derive(Debug, Clone, Copy)]
    pub struct Cell {
        pub class: usize,
        pub affiliation: usize,
        pub freq: usize,
        pub location: usize,
        pub time: usize,
    }

    pub fn cells() -> Vec<Cell> {
        let mut out = Vec::with_capacity(CELLS);
        for class in 0..CLASSES.len() {
            for affiliation in 0..AFFILIATIONS.len() {
                for freq in 0..FREQS {
                    for location in 0..LOCATIONS {
                        for time in 0..TIMES {
                            out.push(Cell {
                                class,
                                affiliation,
                                freq,
                                location,
                                time,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn taxonomy() -> Taxonomy {
        Taxonomy::new(CLASSES.iter().map(|(c, ps)| ClassEntry::new(c, ps))).unwrap()
    }

    pub fn region_id(k: usize) -> String {
        format!("G{k}")
    }

    pub fn regions() -> RegionStore {
        RegionStore::from_regions((0..REGIONS).map(|k| {
            let lon = -110.0 + 2.0 * k as f64;
            Region::rectangle(region_id(k), region_id(k), (lon, 30.0), (lon + 1.0, 31.0)).unwrap()
        }))
        .unwrap()
    }

    pub fn point(location: usize) -> GeoPoint {
        if location < REGIONS {
            GeoPoint::new(-109.5 + 2.0 * location as f64, 30.5).unwrap()
        } else {
            GeoPoint::new(-100.0, 40.0).unwrap()
        }
    }

    pub fn hz(i: usize) -> Hz {
        Hz(1_700_000_000 + i as u64 * 1_000_000)
    }

    pub fn instant(j: usize) -> chrono::DateTime<Utc> {
        Utc.with_ymd_and_hms(2019, 10, 1, 4 * j as u32, 0, 0).unwrap()
    }

    pub fn request(cell: &Cell, n: usize) -> SpectrumRequest {
        SpectrumRequest {
            id: format!("g{n}"),
            requester_class: CLASSES[cell.class].0.into(),
            action: Default::default(),
            location: point(cell.location),
            frequency: FrequencyRange::new(hz(cell.freq), hz(cell.freq)).unwrap(),
            time: TimeWindow::new(instant(cell.time), instant(cell.time)).unwrap(),
            affiliation: Some(AFFILIATIONS[cell.affiliation]),
        }
    }

    /// Reflexive-transitive closure over the class table, computed independently of the taxonomy module.
    pub fn is_a(sub: usize, sup: usize) -> bool {
        if sub == sup {
            return true;
        }
        CLASSES[sub]
            .1
            .iter()
            .any(|p| is_a(CLASSES.iter().position(|(c, _)| c == p).unwrap(), sup))
    }
}

/// Oracle-side rule: lattice indices only.
#[derive(Debug, Clone, PartialEq)]
enum Rule {
    Freq(usize, usize),
    Class(usize),
    Affiliation(usize),
    Location(BTreeSet<usize>),
    Time(usize, usize),
}

impl Rule {
    fn holds(&self, c: &grid::Cell) -> bool {
        match self {
            Rule::Freq(a, b) => *a <= c.freq && c.freq <= *b,
            Rule::Class(k) => grid::is_a(c.class, *k),
            Rule::Affiliation(a) => c.affiliation == *a,
            Rule::Location(set) => set.contains(&c.location),
            Rule::Time(a, b) => *a <= c.time && c.time <= *b,
        }
    }

    fn restriction(&self) -> Restriction {
        match self {
            Rule::Freq(a, b) => Restriction::FrequencyWithin(FrequencyRange::new(grid::hz(*a), grid::hz(*b)).unwrap()),
            Rule::Class(k) => Restriction::RequesterIsA(grid::CLASSES[*k].0.into()),
            Rule::Affiliation(a) => Restriction::AffiliationIs(grid::AFFILIATIONS[*a]),
            Rule::Location(set) => Restriction::location_within_any(set.iter().map(|k| grid::region_id(*k))).unwrap(),
            Rule::Time(a, b) => Restriction::ActiveDuring(TimeWindow::new(grid::instant(*a), grid::instant(*b)).unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    parent: Option<usize>,
    rules: Vec<Rule>,
    effect: Option<Effect>,
    precedence: u32,
}

/// Sub-interval of `[lo, hi]` that never spans the whole lattice `0..n`.
fn sub_interval(rng: &mut ChaCha8Rng, lo: usize, hi: usize, n: usize) -> (usize, usize) {
    loop {
        let a = rng.gen_range(lo..=hi);
        let b = rng.gen_range(a..=hi);
        if !(a == 0 && b == n - 1) {
            return (a, b);
        }
    }
}

/// Random forest where each node may narrow what its ancestors already constrain, one rule per kind.
fn random_hierarchy(rng: &mut ChaCha8Rng) -> Vec<Node> {
    let size = rng.gen_range(4..=12);
    let mut nodes: Vec<Node> = Vec::with_capacity(size);
    let mut depth: Vec<usize> = Vec::with_capacity(size);
    for _ in 0..size {
        let candidates: Vec<usize> = (0..nodes.len()).filter(|&i| depth[i] < 4).collect();
        let parent = if !candidates.is_empty() && rng.gen_bool(0.75) { candidates.choose(rng).copied() } else { None };
        let mut inherited: Vec<Rule> = Vec::new();
        let mut cursor = parent;
        while let Some(i) = cursor {
            inherited.extend(nodes[i].rules.iter().cloned());
            cursor = nodes[i].parent;
        }
        // The narrowest inherited rule of each kind is the last one pushed by the nearest ancestor.
        let narrowest = |pick: &dyn Fn(&Rule) -> bool| inherited.iter().find(|r| pick(r)).cloned();
        let mut rules = Vec::new();
        if rng.gen_bool(0.5) {
            let (lo, hi) = match narrowest(&|r| matches!(r, Rule::Freq(..))) {
                Some(Rule::Freq(a, b)) => (a, b),
                _ => (0, grid::FREQS - 1),
            };
            let (a, b) = sub_interval(rng, lo, hi, grid::FREQS);
            rules.push(Rule::Freq(a, b));
        }
        if rng.gen_bool(0.4) {
            let base = match narrowest(&|r| matches!(r, Rule::Class(_))) {
                Some(Rule::Class(k)) => Some(k),
                _ => None,
            };
            let options: Vec<usize> = (0..grid::CLASSES.len()).filter(|&k| base.is_none_or(|b| grid::is_a(k, b))).collect();
            rules.push(Rule::Class(*options.choose(rng).unwrap()));
        }
        if rng.gen_bool(0.3) {
            let a = match narrowest(&|r| matches!(r, Rule::Affiliation(_))) {
                Some(Rule::Affiliation(a)) => a,
                _ => rng.gen_range(0..2),
            };
            rules.push(Rule::Affiliation(a));
        }
        if rng.gen_bool(0.4) {
            let base: Vec<usize> = match narrowest(&|r| matches!(r, Rule::Location(_))) {
                Some(Rule::Location(s)) => s.into_iter().collect(),
                _ => (0..grid::REGIONS).collect(),
            };
            let n = rng.gen_range(1..=base.len());
            rules.push(Rule::Location(base.choose_multiple(rng, n).copied().collect()));
        }
        if rng.gen_bool(0.3) {
            let (lo, hi) = match narrowest(&|r| matches!(r, Rule::Time(..))) {
                Some(Rule::Time(a, b)) => (a, b),
                _ => (0, grid::TIMES - 1),
            };
            let (a, b) = sub_interval(rng, lo, hi, grid::TIMES);
            rules.push(Rule::Time(a, b));
        }
        let effect = match rng.gen_range(0..6) {
            0 | 1 => Some(Effect::Permit),
            2 => Some(Effect::Deny),
            3 => Some(Effect::PermitWithObligations(vec!["log usage".into()])),
            _ => None,
        };
        depth.push(parent.map_or(1, |p| depth[p] + 1));
        nodes.push(Node {
            parent,
            rules,
            effect,
            precedence: rng.gen_range(0..3),
        });
    }
    nodes
}

fn node_id(i: usize) -> PolicyId {
    format!("N{i:02}").as_str().into()
}

fn to_policies(nodes: &[Node]) -> Vec<Policy> {
    nodes
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut p = Policy::new(node_id(i));
            p.parent = n.parent.map(node_id);
            p.restrictions = n.rules.iter().map(Rule::restriction).collect();
            p.effect = n.effect.clone();
            p.precedence = n.precedence;
            p
        })
        .collect()
}

fn build(policies: &[Policy], taxonomy: &Arc<Taxonomy>, regions: &Arc<RegionStore>) -> Snapshot {
    let map: BTreeMap<PolicyId, Policy> = policies.iter().map(|p| (p.id.clone(), p.clone())).collect();
    Snapshot::build(1, map, taxonomy.clone(), regions.clone()).unwrap()
}

/// Brute-force applicability: walk the parent pointers and test every rule against the cell.
fn oracle_applicable(nodes: &[Node], cell: &grid::Cell) -> Vec<bool> {
    (0..nodes.len())
        .map(|i| {
            let mut cursor = Some(i);
            while let Some(j) = cursor {
                if !nodes[j].rules.iter().all(|r| r.holds(cell)) {
                    return false;
                }
                cursor = nodes[j].parent;
            }
            true
        })
        .collect()
}

struct GridWorld {
    cells: Vec<grid::Cell>,
    requests: Vec<SpectrumRequest>,
    within: Vec<BTreeSet<RegionId>>,
    taxonomy: Arc<Taxonomy>,
    regions: Arc<RegionStore>,
    hierarchies: Vec<Vec<Node>>,
}

impl GridWorld {
    fn new(seed: u64) -> Self {
        let cells = grid::cells();
        let requests = cells.iter().enumerate().map(|(n, c)| grid::request(c, n)).collect();
        let regions = Arc::new(grid::regions());
        let within = (0..grid::LOCATIONS).map(|l| infer_within(grid::point(l), &regions)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hierarchies = (0..HIERARCHIES).map(|_| random_hierarchy(&mut rng)).collect();
        GridWorld {
            cells,
            requests,
            within,
            taxonomy: Arc::new(grid::taxonomy()),
            regions,
            hierarchies,
        }
    }
}

fn us91_golden() -> Verdict {
    let started = Instant::now();
    let taxonomy = Arc::new(fixtures::taxonomy());
    let regions = Arc::new(fixtures::regions());
    let mut policies = parse_policy_doc(US91).map_err(|e| e.to_string())?.policies;
    let base = build(&policies, &taxonomy, &regions);
    policies.extend(parse_policy_doc(US91_LOCAL).map_err(|e| e.to_string())?.policies);
    let with_local = build(&policies, &taxonomy, &regions);
    let requests: Vec<SpectrumRequest> = parse_requests(REQUESTS).into_iter().map(|r| r.unwrap()).collect();
    ensure(requests.len() == 3, || "expected three scenario requests".into())?;

    for snap in [&base, &with_local] {
        let a = evaluate(&requests[0], snap).map_err(|e| e.to_string())?;
        ensure(a.decision == Decision::Effect(Effect::Permit), || format!("(a) decision {:?}", a.decision))?;
        ensure(a.triggering_policy.as_ref().map(PolicyId::as_str) == Some("US91-3.1"), || {
            format!("(a) trigger {:?}", a.triggering_policy)
        })?;
    }

    let b = evaluate(&requests[1], &with_local).map_err(|e| e.to_string())?;
    ensure(b.decision == Decision::Effect(Effect::Deny), || format!("(b) decision {:?}", b.decision))?;
    ensure(b.triggering_policy.as_ref().map(PolicyId::as_str) == Some("US91-3.1-Local"), || {
        format!("(b) trigger {:?}", b.triggering_policy)
    })?;
    ensure(
        b.reasons.iter().any(|r| {
            r.text == "the request is in a prohibited time window"
                && r.satisfied
                && r.policy_id.as_ref().map(PolicyId::as_str) == Some("US91-3.1-Local")
        }),
        || format!("(b) reasons {:?}", b.reasons),
    )?;

    let c = evaluate(&requests[2], &with_local).map_err(|e| e.to_string())?;
    ensure(c.decision == Decision::DefaultDeny, || format!("(c) decision {:?}", c.decision))?;
    ensure(c.triggering_policy.is_none(), || "(c) has a trigger".into())?;
    let applicable: Vec<&str> = c.applicable_policies.iter().map(PolicyId::as_str).collect();
    ensure(applicable == ["US91", "US91-3"], || format!("(c) applicable {applicable:?}"))?;
    ensure(
        c.reasons.len() == 1
            && c.reasons[0].text == "the request is not in a permitted location"
            && !c.reasons[0].satisfied
            && c.reasons[0].policy_id.as_ref().map(PolicyId::as_str) == Some("US91-3.1")
            && matches!(c.reasons[0].restriction, Some(Restriction::LocationWithinAny(_))),
        || format!("(c) reasons {:?}", c.reasons),
    )?;

    let elapsed = started.elapsed();
    ensure(elapsed < GOLDEN_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("3 scenarios exact, {elapsed:.2?} < {GOLDEN_BUDGET:?}"))
}

fn realization_oracle(world: &GridWorld) -> Verdict {
    let started = Instant::now();
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    let mut applicable_total = 0usize;
    let mut first = None;
    for (h, nodes) in world.hierarchies.iter().enumerate() {
        let snap = build(&to_policies(nodes), &world.taxonomy, &world.regions);
        for (cell, req) in world.cells.iter().zip(&world.requests) {
            let expected: BTreeSet<PolicyId> = oracle_applicable(nodes, cell)
                .into_iter()
                .enumerate()
                .filter(|(_, ok)| *ok)
                .map(|(i, _)| node_id(i))
                .collect();
            let actual = realize(req, &snap, &world.within[cell.location]).map_err(|e| e.to_string())?;
            checked += 1;
            applicable_total += expected.len();
            if actual != expected {
                mismatches += 1;
                first.get_or_insert_with(|| format!("hierarchy {h}, {cell:?}: expected {expected:?}, got {actual:?}"));
            }
        }
    }
    let elapsed = started.elapsed();
    ensure(mismatches == 0, || format!("{mismatches} mismatches; first: {}", first.unwrap_or_default()))?;
    ensure(elapsed < ORACLE_BUDGET, || format!("took {elapsed:?}"))?;
    ensure(applicable_total > checked / 10, || "oracle universe is nearly empty".into())?;
    Ok(format!(
        "{} hierarchies x {} cells, 0 mismatches, {applicable_total} applicable pairs, {elapsed:.2?} < {ORACLE_BUDGET:?}",
        world.hierarchies.len(),
        grid::CELLS
    ))
}

fn classification_oracle(world: &GridWorld) -> Verdict {
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    let mut inferred = 0usize;
    let mut first = None;
    for (h, nodes) in world.hierarchies.iter().enumerate() {
        let snap = build(&to_policies(nodes), &world.taxonomy, &world.regions);
        let result = classify(&snap);
        let sat: Vec<Vec<bool>> = {
            let per_cell: Vec<Vec<bool>> = world.cells.iter().map(|c| oracle_applicable(nodes, c)).collect();
            (0..nodes.len()).map(|i| per_cell.iter().map(|row| row[i]).collect()).collect()
        };
        for p in 0..nodes.len() {
            for q in 0..nodes.len() {
                let expected = sat[p].iter().zip(&sat[q]).all(|(sp, sq)| !sp || *sq);
                let actual = result.subsumes(&node_id(q), &node_id(p));
                pairs += 1;
                let declared = {
                    let mut c = Some(p);
                    let mut found = false;
                    while let Some(i) = c {
                        found |= i == q;
                        c = nodes[i].parent;
                    }
                    found
                };
                if actual && !declared {
                    inferred += 1;
                }
                if actual != expected {
                    mismatches += 1;
                    first.get_or_insert_with(|| format!("hierarchy {h}: N{p:02} vs N{q:02}, expected {expected}, got {actual}"));
                }
            }
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches; first: {}", first.unwrap_or_default()))?;
    ensure(inferred > 0, || "no subsumption beyond declared ancestry was exercised".into())?;
    Ok(format!("{pairs} policy pairs, 0 mismatches, {inferred} inferred beyond declared ancestry"))
}

fn default_rule_and_precedence(world: &GridWorld) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut defaults = 0usize;
    let mut empty_sets = 0usize;
    let mut flips = 0usize;
    for (h, nodes) in world.hierarchies.iter().enumerate().take(20) {
        let policies = to_policies(nodes);
        let snap = build(&policies, &world.taxonomy, &world.regions);
        let mut permits = Vec::new();
        for (cell, req) in world.cells.iter().zip(&world.requests).step_by(7) {
            let applicable = oracle_applicable(nodes, cell);
            let any_effect = applicable.iter().zip(nodes).any(|(ok, n)| *ok && n.effect.is_some());
            let result = evaluate(req, &snap).map_err(|e| e.to_string())?;
            if !any_effect {
                ensure(result.decision == Decision::DefaultDeny, || {
                    format!("hierarchy {h}, {cell:?}: no effectful policy applies but got {:?}", result.decision)
                })?;
                ensure(!result.reasons.is_empty(), || format!("hierarchy {h}, {cell:?}: default deny without reasons"))?;
                defaults += 1;
                empty_sets += applicable.iter().all(|ok| !ok) as usize;
            } else if matches!(result.decision, Decision::Effect(ref e) if e.is_permit()) {
                permits.push((cell, req, result.triggering_policy.clone().unwrap()));
            }
        }
        let top = nodes.iter().map(|n| n.precedence).max().unwrap_or(0);
        permits.shuffle(&mut rng);
        for (cell, req, trigger) in permits.into_iter().take(15) {
            let local = Policy::new(format!("{trigger}-Local").as_str())
                .with_parent(trigger.clone())
                .with_restriction(Restriction::ActiveDuring(
                    TimeWindow::new(grid::instant(cell.time), grid::instant(cell.time)).unwrap(),
                ))
                .with_effect(Effect::Deny)
                .with_precedence(top + 1);
            let mut extended = policies.clone();
            extended.push(local.clone());
            let after = evaluate(req, &build(&extended, &world.taxonomy, &world.regions)).map_err(|e| e.to_string())?;
            ensure(
                after.decision == Decision::Effect(Effect::Deny) && after.triggering_policy.as_ref() == Some(&local.id),
                || format!("hierarchy {h}: override of {trigger} gave {:?} via {:?}", after.decision, after.triggering_policy),
            )?;
            flips += 1;
        }
    }
    ensure(defaults >= 100 && empty_sets >= 50, || format!("too few default cases sampled ({defaults}, {empty_sets} empty)"))?;
    ensure(flips >= 100, || format!("too few permits sampled ({flips})"))?;
    Ok(format!(
        "{defaults}/{defaults} default denies ({empty_sets} with empty applicable set), {flips}/{flips} precedence flips"
    ))
}

fn convex_ring(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let cx = rng.gen_range(-150.0..150.0);
    let cy = rng.gen_range(-70.0..70.0);
    let r = rng.gen_range(0.05..10.0);
    let k = rng.gen_range(3..12);
    let mut angles: Vec<f64> = Vec::new();
    while angles.len() < k {
        let a = rng.gen_range(0.0..TAU);
        if angles.iter().all(|b| (a - b).abs() > 0.05) {
            angles.push(a);
        }
    }
    angles.sort_by(f64::total_cmp);
    let mut ring: Vec<(f64, f64)> = angles.iter().map(|a| (cx + r * a.cos(), cy + r * a.sin())).collect();
    ring.push(ring[0]);
    ring
}

/// Inside iff on the left of (or on) every counter-clockwise edge.
fn half_plane_inside(ring: &[(f64, f64)], p: (f64, f64)) -> bool {
    ring.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
    })
}

fn geo_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let pt = |(x, y): (f64, f64)| GeoPoint::new(x, y).unwrap();
    let mut mismatches = 0usize;
    let mut inside = 0usize;
    let mut boundary = 0usize;
    for _ in 0..GEO_PAIRS {
        let ring = convex_ring(&mut rng);
        let region = Region::new("poly", "poly", vec![vec![ring.iter().copied().map(pt).collect()]]).map_err(|e| e.to_string())?;
        let (lo_x, hi_x) = ring.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v.0), h.max(v.0)));
        let (lo_y, hi_y) = ring.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(v.1), h.max(v.1)));
        let (pad_x, pad_y) = ((hi_x - lo_x) * 0.25, (hi_y - lo_y) * 0.25);
        let p = (
            rng.gen_range(lo_x - pad_x..hi_x + pad_x).clamp(-180.0, 180.0),
            rng.gen_range(lo_y - pad_y..hi_y + pad_y).clamp(-90.0, 90.0),
        );
        let expected = half_plane_inside(&ring, p);
        inside += expected as usize;
        mismatches += (point_in_region(pt(p), &region) != expected) as usize;

        let edge = rng.gen_range(0..ring.len() - 1);
        let t: f64 = rng.gen_range(0.0..=1.0);
        let (a, b) = (ring[edge], ring[edge + 1]);
        for q in [a, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))] {
            boundary += 1;
            mismatches += !point_in_region(pt(q), &region) as usize;
        }
    }
    ensure(mismatches == 0, || format!("{mismatches} mismatches"))?;
    ensure(inside > GEO_PAIRS / 4 && inside < GEO_PAIRS * 3 / 4, || format!("unbalanced sampling: {inside} inside"))?;
    Ok(format!("{GEO_PAIRS} convex pairs ({inside} inside) + {boundary} boundary points, 0 mismatches"))
}

fn latency_envelope() -> Verdict {
    let taxonomy = fixtures::taxonomy();
    let regions = fixtures::regions();
    let policies = synth::policies(2019, 165, &taxonomy, &regions);
    let requests = synth::requests(2019, 100, &taxonomy, &regions);
    let snap = build(&policies, &Arc::new(taxonomy), &Arc::new(regions));
    let report = bench(&requests, &snap, 4, 1, true).map_err(|e| e.to_string())?;
    let mismatches = report.mismatches.clone().unwrap_or_default();
    ensure(report.policy_count == 165 && report.request_count == 100, || format!("counts {report:?}"))?;
    ensure(mismatches.is_empty(), || format!("parallel differs from sequential for {mismatches:?}"))?;
    ensure(report.wall_time_ms < LATENCY_BUDGET_MS, || format!("wall time {:.1} ms", report.wall_time_ms))?;
    Ok(format!(
        "165 policies x 100 requests on 4 workers: {:.1} ms < {LATENCY_BUDGET_MS} ms, p95 {:.3} ms, verify 0 mismatches",
        report.wall_time_ms, report.per_request_p95_ms
    ))
}

fn roundtrip_policy(rng: &mut ChaCha8Rng, i: usize, earlier: &[PolicyId]) -> Policy {
    let parent = if !earlier.is_empty() && rng.gen_bool(0.6) { earlier.choose(rng).cloned() } else { None };
    let id = match i % 4 {
        0 => format!("RT{i}"),
        1 => format!("RT{i}-{}", rng.gen_range(1..9)),
        2 => format!("RT{i}-{}.{}", rng.gen_range(1..9), rng.gen_range(1..9)),
        _ => format!("RT{i}-Local"),
    };
    let mut p = common::random_policy(rng, &id, parent.as_ref());
    if rng.gen_bool(0.3) {
        // Odd decimals, down to single hertz.
        let lo = rng.gen_range(1_000_000_000u64..2_000_000_000);
        let hi = lo + rng.gen_range(1u64..5_000_000);
        p.restrictions.retain(|r| !matches!(r, Restriction::FrequencyWithin(_)));
        p.restrictions.push(Restriction::FrequencyWithin(FrequencyRange::new(Hz(lo), Hz(hi)).unwrap()));
    }
    if rng.gen_bool(0.2) {
        p.restrictions.retain(|r| !matches!(r, Restriction::RequesterIsA(_)));
        p.restrictions.push(Restriction::RequesterIsA("UncuratedGadget".into()));
    }
    if rng.gen_bool(0.5) {
        p.meta.set("original_text", format!("Line \"{i}\" says: use \\ caution;\tfor {{now}}"));
        p.meta.set("source_document", "NTIA Redbook".into());
    }
    if rng.gen_bool(0.3) {
        p.meta.set("page", rng.gen_range(1..900).to_string());
        p.meta.set("url", format!("https://example.org/redbook#{i}"));
    }
    if let Some(Effect::PermitWithObligations(obs)) = &mut p.effect {
        obs.push(format!("report to \"range {i}\""));
    }
    p
}

fn parser_roundtrip() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut policies: Vec<Policy> = Vec::with_capacity(ROUNDTRIP_POLICIES);
    let mut ids: Vec<PolicyId> = Vec::new();
    for i in 0..ROUNDTRIP_POLICIES {
        let p = roundtrip_policy(&mut rng, i, &ids);
        ids.push(p.id.clone());
        policies.push(p);
    }
    let text = serialize_policy_doc(&policies);
    let parsed = parse_policy_doc(&text).map_err(|e| format!("re-parse failed: {e}"))?;
    let diverging = policies.iter().zip(&parsed.policies).filter(|(a, b)| a != b).count();
    ensure(parsed.policies.len() == policies.len() && diverging == 0, || {
        format!("{diverging} policies changed, {} of {} parsed", parsed.policies.len(), policies.len())
    })?;
    ensure(serialize_policy_doc(&parsed.policies) == text, || "re-serialization is not stable".into())?;

    let regions = fixtures::regions();
    let from_csv = parse_capture_csv(CAPTURE, &regions, &|_| false).map_err(|e| e.to_string())?;
    let from_dsl = parse_policy_doc(US91).map_err(|e| e.to_string())?;
    ensure(from_csv.policies == from_dsl.policies, || {
        format!("capture sheet differs from DSL:\n{}\nvs\n{}", serialize_policy_doc(&from_csv.policies), US91)
    })?;
    Ok(format!("{ROUNDTRIP_POLICIES} random policies identical after serialize/parse; capture CSV == DSL for US91 ({} policies)", from_dsl.policies.len()))
}

fn store_audit() -> Verdict {
    let mut total_ops = 0usize;
    let mut total_failures = 0usize;
    for seed in 0..5u64 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("store.jsonl");
        let open = || SharedStore::open(&path, Arc::new(fixtures::taxonomy()), Arc::new(fixtures::regions()));
        let store = open().map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = common::random_ops(&store, &mut rng, STORE_OPS);
        total_ops += outcome.versions.len();
        total_failures += outcome.failures;
        ensure(outcome.versions.windows(2).all(|w| w[0] < w[1]), || {
            format!("seed {seed}: versions not strictly increasing: {:?}", outcome.versions)
        })?;
        ensure(common::referentially_sound(&store), || format!("seed {seed}: dangling reference"))?;
        let before = store.canonical_text();
        drop(store);
        let replayed = open().map_err(|e| format!("seed {seed}: replay failed: {e}"))?;
        ensure(replayed.canonical_text() == before, || format!("seed {seed}: replayed snapshot differs"))?;
    }
    Ok(format!(
        "5 sequences x {STORE_OPS} operations ({total_ops} applied, {total_failures} rejected), versions strictly increasing, replay byte-identical"
    ))
}

fn main() -> ExitCode {
    let world = GridWorld::new(2020);
    let criteria: Vec<Criterion> = vec![
        ("us91-golden", Box::new(us91_golden)),
        ("realization-oracle", Box::new(|| realization_oracle(&world))),
        ("classification-oracle", Box::new(|| classification_oracle(&world))),
        ("default-rule-and-precedence", Box::new(|| default_rule_and_precedence(&world))),
        ("geo-properties", Box::new(geo_properties)),
        ("latency-envelope", Box::new(latency_envelope)),
        ("parser-roundtrip", Box::new(parser_roundtrip)),
        ("store-audit", Box::new(store_audit)),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        match verdict {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
