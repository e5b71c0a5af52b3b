//! The US91 reference policies, the six named training ranges they list, and a
//! small device taxonomy. Region outlines are simplified rectangles/pentagons,
//! not survey boundaries.

use alloc::collections::BTreeMap;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dsl::parse_policy_doc;
use crate::geo::{parse_wkt_point, GeoPoint, Region, RegionStore};
use crate::model::{Action, Affiliation, FrequencyRange, FrequencyUnit, PolicyId, SpectrumRequest, TimeWindow};
use crate::store::Snapshot;
use crate::taxonomy::{ClassEntry, Taxonomy};

pub const US91_DSL: &str = include_str!("../fixtures/us91.policy");
pub const US91_LOCAL_DSL: &str = include_str!("../fixtures/us91_local.policy");

/// `(id, display name, outline)`; outlines are closed lon/lat rings.
pub type RegionOutline = (&'static str, &'static str, &'static [(f64, f64)]);

pub const REGION_OUTLINES: [RegionOutline; 6] = [
    (
        "White_Sands_Missile_Range",
        "White Sands Missile Range",
        &[(-106.75, 32.25), (-106.2, 32.25), (-106.2, 33.8), (-106.5, 33.95), (-106.75, 33.8), (-106.75, 32.25)],
    ),
    (
        "Ft_Irwin",
        "Fort Irwin",
        &[(-116.95, 35.15), (-116.3, 35.15), (-116.3, 35.55), (-116.95, 35.55), (-116.95, 35.15)],
    ),
    (
        "Yuma_Proving_Ground",
        "Yuma Proving Ground",
        &[(-115.0, 33.0), (-113.0, 33.0), (-113.0, 34.0), (-115.0, 34.0), (-115.0, 33.0)],
    ),
    (
        "Ft_Polk",
        "Fort Polk",
        &[(-93.35, 30.95), (-92.95, 30.95), (-92.95, 31.2), (-93.35, 31.2), (-93.35, 30.95)],
    ),
    (
        "Ft_Bragg",
        "Fort Bragg",
        &[(-79.4, 35.05), (-78.9, 35.05), (-78.9, 35.3), (-79.15, 35.4), (-79.4, 35.3), (-79.4, 35.05)],
    ),
    (
        "Ft_Hood",
        "Fort Hood",
        &[(-97.95, 31.05), (-97.55, 31.05), (-97.55, 31.4), (-97.95, 31.4), (-97.95, 31.05)],
    ),
];

pub fn regions() -> RegionStore {
    RegionStore::from_regions(REGION_OUTLINES.iter().map(|(id, name, ring)| {
        let pts: Vec<GeoPoint> = ring
            .iter()
            .map(|&(lon, lat)| GeoPoint::new(lon, lat).expect("fixture coordinate"))
            .collect();
        Region::new(*id, *name, vec![vec![pts]]).expect("fixture region")
    }))
    .expect("fixture regions are unique")
}

pub fn taxonomy() -> Taxonomy {
    Taxonomy::new([
        ClassEntry::new("Radio", &[]),
        ClassEntry::new("MilitaryRadio", &["Radio"]),
        ClassEntry::new("JointTacticalRadioSystem", &["MilitaryRadio"]),
        ClassEntry::new("GenericJTRSRadio", &["JointTacticalRadioSystem"]).affiliated(Affiliation::Federal),
        ClassEntry::new("CommercialRadio", &["Radio"]),
        ClassEntry::new("AWS", &["CommercialRadio"]).affiliated(Affiliation::NonFederal),
        ClassEntry::new("Radar", &[]),
    ])
    .expect("fixture taxonomy")
}

pub fn us91_snapshot(with_local: bool) -> Snapshot {
    let mut policies = BTreeMap::new();
    let mut add = |text: &str| {
        for p in parse_policy_doc(text).expect("fixture parses").policies {
            policies.insert(p.id.clone(), p);
        }
    };
    add(US91_DSL);
    if with_local {
        add(US91_LOCAL_DSL);
    }
    Snapshot::build(1, policies, Arc::new(taxonomy()), Arc::new(regions())).expect("fixture snapshot")
}

fn request(id: &str, wkt: &str, start: &str, end: &str) -> SpectrumRequest {
    SpectrumRequest {
        id: id.into(),
        requester_class: "GenericJTRSRadio".into(),
        action: Action::Transmission,
        location: parse_wkt_point(wkt).expect("fixture point"),
        frequency: FrequencyRange::parse("1755", "1756.25", FrequencyUnit::MHz).expect("fixture range"),
        time: TimeWindow::parse(start, end).expect("fixture window"),
        affiliation: None,
    }
}

/// JTRS radio at POINT(-114.23 33.20) asking for 1755–1756.25 MHz before the local window opens.
pub fn sample_request() -> SpectrumRequest {
    request("req-permit", "POINT(-114.23 33.20)", "2019-10-01T08:00:00Z", "2019-10-01T09:00:00Z")
}

/// Same request, inside the local deny window.
pub fn sample_request_in_local_window() -> SpectrumRequest {
    request("req-local-window", "POINT(-114.23 33.20)", "2019-10-01T12:00:00Z", "2019-10-01T13:00:00Z")
}

/// Same request, moved outside every listed location.
pub fn sample_request_outside_locations() -> SpectrumRequest {
    request("req-elsewhere", "POINT(-100.0 40.0)", "2019-10-01T08:00:00Z", "2019-10-01T09:00:00Z")
}

pub fn policy_ids(ids: &[&str]) -> Vec<PolicyId> {
    ids.iter().map(|s| PolicyId::from(*s)).collect()
}
