use std::fmt;
use std::str::FromStr;

use crate::cohort::{ground_truth_ga, trimester, Country, Device, Patient, Visit};
use crate::error::{Error, Result};
use crate::growth::{classify_size, PercentileTable, SizeCategory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SizeGroup {
    Classifiable,
    /// sga or severe_sga
    Sga,
    SevereSga,
    Lga,
    Normal,
    SgaOrLga,
}

impl SizeGroup {
    pub const ALL: [SizeGroup; 6] = [
        SizeGroup::Classifiable,
        SizeGroup::Sga,
        SizeGroup::SevereSga,
        SizeGroup::Lga,
        SizeGroup::Normal,
        SizeGroup::SgaOrLga,
    ];

    pub fn contains(self, c: SizeCategory) -> bool {
        match self {
            SizeGroup::Classifiable => c != SizeCategory::Unclassifiable,
            SizeGroup::Sga => c.in_sga_group(),
            SizeGroup::SevereSga => c == SizeCategory::SevereSga,
            SizeGroup::Lga => c == SizeCategory::Lga,
            SizeGroup::Normal => c == SizeCategory::Normal,
            SizeGroup::SgaOrLga => c.in_sga_group() || c == SizeCategory::Lga,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            SizeGroup::Classifiable => "classifiable",
            SizeGroup::Sga => "sga",
            SizeGroup::SevereSga => "severe_sga",
            SizeGroup::Lga => "lga",
            SizeGroup::Normal => "normal",
            SizeGroup::SgaOrLga => "sga_or_lga",
        }
    }
}

/// Visit-level subgroup criterion.
#[derive(Debug, Clone, PartialEq)]
pub enum Criterion {
    All,
    /// Any of the listed trimesters.
    Trimester(Vec<u8>),
    Country(Country),
    Device(Device),
    Site(Country, Device),
    Size(SizeGroup),
    /// Inclusive ground-truth GA window in days.
    GaRange(f64, f64),
}

/// Data a criterion may need beyond the visit itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct SubgroupContext<'a> {
    pub growth: Option<&'a PercentileTable>,
}

impl Criterion {
    /// Fails when the criterion cannot be evaluated in `ctx`.
    pub fn check(&self, ctx: &SubgroupContext) -> Result<()> {
        if matches!(self, Criterion::Size(_)) && ctx.growth.is_none() {
            return Err(Error::Config(format!("criterion `{self}` needs a percentile table")));
        }
        Ok(())
    }

    pub fn matches(&self, p: &Patient, v: &Visit, ctx: &SubgroupContext) -> bool {
        let Ok(ga) = ground_truth_ga(v).map(|g| g as f64) else {
            return false;
        };
        match self {
            Criterion::All => true,
            Criterion::Trimester(ts) => ts.contains(&trimester(ga)),
            Criterion::Country(c) => p.country == *c,
            Criterion::Device(d) => p.device == *d,
            Criterion::Site(c, d) => p.country == *c && p.device == *d,
            Criterion::Size(group) => {
                let category = match (v.biometry.ac, ctx.growth) {
                    (Some(ac), Some(table)) => classify_size(ac, ga, p.country, table),
                    _ => SizeCategory::Unclassifiable,
                };
                group.contains(category)
            }
            Criterion::GaRange(lo, hi) => (*lo..=*hi).contains(&ga),
        }
    }
}

pub fn subgroup_filter<'a>(
    visits: &[(&'a Patient, &'a Visit)],
    criterion: &Criterion,
    ctx: &SubgroupContext,
) -> Result<Vec<(&'a Patient, &'a Visit)>> {
    criterion.check(ctx)?;
    Ok(visits.iter().copied().filter(|(p, v)| criterion.matches(p, v, ctx)).collect())
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criterion::All => f.write_str("all"),
            Criterion::Trimester(ts) => {
                let parts: Vec<String> = ts.iter().map(u8::to_string).collect();
                write!(f, "trimester={}", parts.join("+"))
            }
            Criterion::Country(c) => write!(f, "country={c}"),
            Criterion::Device(d) => write!(f, "device={d}"),
            Criterion::Site(c, d) => write!(f, "site={c}-{d}"),
            Criterion::Size(g) => write!(f, "size={}", g.as_str()),
            Criterion::GaRange(lo, hi) => write!(f, "ga={lo}..{hi}"),
        }
    }
}

fn country(s: &str) -> Option<Country> {
    match s {
        "US" => Some(Country::US),
        "Zambia" => Some(Country::Zambia),
        _ => None,
    }
}

fn device(s: &str) -> Option<Device> {
    match s {
        "GE" => Some(Device::GE),
        "Sonosite" => Some(Device::Sonosite),
        _ => None,
    }
}

/// Parses `all`, `trimester=1`, `trimester=2+3`, `country=Zambia`,
/// `device=GE`, `site=Zambia-Sonosite`, `size=sga`, `ga=98..195`.
impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownCriterion(s.to_string());
        if s == "all" {
            return Ok(Criterion::All);
        }
        let (key, value) = s.split_once('=').ok_or_else(unknown)?;
        Ok(match key {
            "trimester" => {
                let ts = value
                    .split('+')
                    .map(|t| t.parse::<u8>().ok().filter(|t| (1..=3).contains(t)))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(unknown)?;
                Criterion::Trimester(ts)
            }
            "country" => Criterion::Country(country(value).ok_or_else(unknown)?),
            "device" => Criterion::Device(device(value).ok_or_else(unknown)?),
            "site" => {
                let (c, d) = value.split_once('-').ok_or_else(unknown)?;
                Criterion::Site(country(c).ok_or_else(unknown)?, device(d).ok_or_else(unknown)?)
            }
            "size" => Criterion::Size(
                SizeGroup::ALL
                    .into_iter()
                    .find(|g| g.as_str() == value)
                    .ok_or_else(unknown)?,
            ),
            "ga" => {
                let (lo, hi) = value.split_once("..").ok_or_else(unknown)?;
                let lo: f64 = lo.parse().map_err(|_| unknown())?;
                let hi: f64 = hi.parse().map_err(|_| unknown())?;
                if !(lo <= hi) {
                    return Err(unknown());
                }
                Criterion::GaRange(lo, hi)
            }
            _ => return Err(unknown()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::tests::visit;
    use crate::growth::PercentileCell;
    use std::collections::BTreeMap;

    fn patient(country: Country, device: Device, gas: &[i64]) -> Patient {
        Patient {
            patient_id: format!("{country}{device}"),
            country,
            device,
            visits: gas.iter().enumerate().map(|(i, g)| visit(&format!("v{i}"), gas[0], g - gas[0])).collect(),
        }
    }

    #[test]
    fn parse_and_print() {
        for s in ["all", "trimester=1", "trimester=2+3", "country=Zambia", "device=GE", "site=Zambia-Sonosite", "size=severe_sga", "ga=98..195"] {
            assert_eq!(s.parse::<Criterion>().unwrap().to_string(), s);
        }
        for s in ["trimester=4", "colour=red", "size=huge", "site=US", "ga=5..1", "nonsense"] {
            assert!(matches!(s.parse::<Criterion>(), Err(Error::UnknownCriterion(_))), "{s}");
        }
    }

    #[test]
    fn trimester_and_metadata() {
        let p = patient(Country::Zambia, Device::Sonosite, &[97, 98, 196]);
        let q = patient(Country::US, Device::GE, &[150]);
        let visits: Vec<_> = p.visits.iter().map(|v| (&p, v)).chain(q.visits.iter().map(|v| (&q, v))).collect();
        let ctx = SubgroupContext::default();
        let t = |k: &str| subgroup_filter(&visits, &k.parse().unwrap(), &ctx).unwrap().len();
        assert_eq!(t("trimester=1"), 1);
        assert_eq!(t("trimester=2"), 2);
        assert_eq!(t("trimester=3"), 1);
        assert_eq!(t("device=Sonosite"), 3);
        let sonosite = subgroup_filter(&visits, &"device=Sonosite".parse().unwrap(), &ctx).unwrap();
        assert!(sonosite.iter().all(|(p, _)| p.country == Country::Zambia));
        assert_eq!(t("site=US-GE"), 1);
        assert_eq!(t("ga=98..196"), 3);
        assert!(subgroup_filter(&visits, &Criterion::Size(SizeGroup::Sga), &ctx).is_err());
    }

    #[test]
    fn size_delegates_to_growth() {
        let table = PercentileTable {
            cells: BTreeMap::from([(
                (Country::US, 21),
                PercentileCell {
                    n: 30,
                    p3: 14.0,
                    p10: 15.0,
                    p90: 18.0,
                },
            )]),
        };
        let ctx = SubgroupContext { growth: Some(&table) };
        let mut p = patient(Country::US, Device::GE, &[150, 151, 152, 153]);
        for (v, ac) in p.visits.iter_mut().zip([13.0, 14.5, 16.0, 19.0]) {
            v.biometry.ac = Some(ac);
        }
        let visits: Vec<_> = p.visits.iter().map(|v| (&p, v)).collect();
        let ids = |g| {
            subgroup_filter(&visits, &Criterion::Size(g), &ctx)
                .unwrap()
                .iter()
                .map(|(_, v)| v.visit_id.clone())
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(SizeGroup::Sga), ["v0", "v1"]);
        assert_eq!(ids(SizeGroup::SevereSga), ["v0"]);
        assert_eq!(ids(SizeGroup::Normal), ["v2"]);
        assert_eq!(ids(SizeGroup::Lga), ["v3"]);
        assert_eq!(ids(SizeGroup::SgaOrLga), ["v0", "v1", "v3"]);
    }
}
