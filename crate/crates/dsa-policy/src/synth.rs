//! Seeded synthetic policy sets and request streams for benchmarking.
//!
//! Policies are built over the bundled taxonomy and training-range regions:
//! band roots, requester-class provisions, location provisions carrying an
//! effect, and occasional higher-priority local overrides.

use chrono::{Duration, TimeZone, Utc};
use dsa_policy_core::geo::{GeoPoint, RegionStore};
use dsa_policy_core::model::{
    Affiliation, Effect, FrequencyRange, Hz, Policy, Restriction, SpectrumRequest, TimeWindow,
};
use dsa_policy_core::taxonomy::Taxonomy;
use rand::seq::{IteratorRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BAND_LO_MHZ: u64 = 1_700;
const BAND_HI_MHZ: u64 = 2_200;

fn day_start() -> chrono::DateTime<Utc> {
    Utc.with_ymd_and_hms(2019, 10, 1, 0, 0, 0).unwrap()
}

fn sub_band(rng: &mut ChaCha8Rng, within: &FrequencyRange) -> FrequencyRange {
    let (lo, hi) = (within.min().0, within.max().0);
    let width = hi - lo;
    let a = lo + rng.gen_range(0..=width / 2);
    let b = rng.gen_range(a + (hi - a) / 4..=hi);
    FrequencyRange::new(Hz(a), Hz(b)).expect("ordered sub-band")
}

/// Exactly `count` valid policies, hierarchy depth at most four.
pub fn policies(seed: u64, count: usize, taxonomy: &Taxonomy, regions: &RegionStore) -> Vec<Policy> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes: Vec<_> = taxonomy.classes().cloned().collect();
    let region_ids: Vec<_> = regions.iter().map(|r| r.id().clone()).collect();
    let mut out: Vec<Policy> = Vec::with_capacity(count);
    let mut root = 0;
    while out.len() < count {
        root += 1;
        let lo = rng.gen_range(BAND_LO_MHZ..BAND_HI_MHZ - 20);
        let band = FrequencyRange::mhz(lo, rng.gen_range(lo + 10..=(lo + 200).min(BAND_HI_MHZ))).expect("band");
        let root_id = format!("SYN{root}");
        out.push(Policy::new(root_id.as_str()).with_restriction(Restriction::FrequencyWithin(band)));

        for k in 1..=rng.gen_range(1..=3) {
            if out.len() >= count {
                break;
            }
            let class_id = format!("{root_id}-{k}");
            let mut provision = Policy::new(class_id.as_str())
                .with_parent(root_id.as_str())
                .with_restriction(Restriction::RequesterIsA(classes.choose(&mut rng).expect("classes").clone()));
            if rng.gen_bool(0.3) {
                let a = if rng.gen() { Affiliation::Federal } else { Affiliation::NonFederal };
                provision = provision.with_restriction(Restriction::AffiliationIs(a));
            }
            out.push(provision);

            for m in 1..=rng.gen_range(1..=3) {
                if out.len() >= count {
                    break;
                }
                let leaf_id = format!("{class_id}.{m}");
                let n = rng.gen_range(1..=3);
                let picked = region_ids.iter().cloned().choose_multiple(&mut rng, n);
                let mut leaf = Policy::new(leaf_id.as_str())
                    .with_parent(class_id.as_str())
                    .with_restriction(Restriction::location_within_any(picked).expect("non-empty"));
                if rng.gen_bool(0.4) {
                    leaf = leaf.with_restriction(Restriction::FrequencyWithin(sub_band(&mut rng, &band)));
                }
                leaf.effect = Some(match rng.gen_range(0..10) {
                    0..=5 => Effect::Permit,
                    6..=7 => Effect::PermitWithObligations(vec![format!("coordinate-with-{root_id}")]),
                    _ => Effect::Deny,
                });
                out.push(leaf);

                if out.len() < count && rng.gen_bool(0.25) {
                    let start = day_start() + Duration::hours(rng.gen_range(0..20));
                    let window = TimeWindow::new(start, start + Duration::hours(rng.gen_range(1..=4))).expect("window");
                    let local = Policy::new(format!("{leaf_id}-Local"))
                        .with_parent(leaf_id.as_str())
                        .with_restriction(Restriction::ActiveDuring(window))
                        .with_effect(Effect::Deny)
                        .with_precedence(1);
                    out.push(local);
                }
            }
        }
    }
    out
}

/// Requests spread over the band, the day and the regions (about one in five falls outside every region).
pub fn requests(seed: u64, count: usize, taxonomy: &Taxonomy, regions: &RegionStore) -> Vec<SpectrumRequest> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let classes: Vec<_> = taxonomy.classes().cloned().collect();
    let anchors: Vec<GeoPoint> = regions
        .iter()
        .map(|r| r.polygons()[0].rings()[0].vertices())
        .map(|v| {
            let n = (v.len() - 1) as f64;
            let lon = v[..v.len() - 1].iter().map(|p| p.lon()).sum::<f64>() / n;
            let lat = v[..v.len() - 1].iter().map(|p| p.lat()).sum::<f64>() / n;
            GeoPoint::new(lon, lat).expect("centroid")
        })
        .collect();
    (0..count)
        .map(|i| {
            let location = match anchors.choose(&mut rng) {
                Some(a) if rng.gen_bool(0.8) => GeoPoint::new(
                    a.lon() + rng.gen_range(-0.05..0.05),
                    a.lat() + rng.gen_range(-0.05..0.05),
                )
                .expect("near anchor"),
                _ => GeoPoint::new(rng.gen_range(-125.0..-67.0), rng.gen_range(25.0..49.0)).expect("conus"),
            };
            let khz = rng.gen_range(BAND_LO_MHZ * 1_000..BAND_HI_MHZ * 1_000);
            let start = day_start() + Duration::minutes(rng.gen_range(0..24 * 60));
            SpectrumRequest {
                id: format!("syn-req-{i}"),
                requester_class: classes.choose(&mut rng).expect("classes").clone(),
                action: Default::default(),
                location,
                frequency: FrequencyRange::new(Hz(khz * 1_000), Hz((khz + rng.gen_range(25..5_000)) * 1_000))
                    .expect("range"),
                time: TimeWindow::new(start, start + Duration::minutes(rng.gen_range(1..120))).expect("window"),
                affiliation: match rng.gen_range(0..3) {
                    0 => Some(Affiliation::Federal),
                    1 => Some(Affiliation::NonFederal),
                    _ => None,
                },
            }
        })
        .collect()
}
