use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::energy::EnergyKwh;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceProfile {
    pub name: String,
    pub kwh_per_month: f64,
}

impl ApplianceProfile {
    pub fn new(name: impl Into<String>, kwh_per_month: f64) -> Result<Self, ReportError> {
        let name = name.into();
        if !(kwh_per_month.is_finite() && kwh_per_month > 0.0) {
            return Err(ReportError::Appliance(format!(
                "`{name}` must use more than 0 kWh per month, got {kwh_per_month}"
            )));
        }
        Ok(ApplianceProfile { name, kwh_per_month })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equivalence {
    pub name: String,
    pub months: f64,
}

/// Reads `name,kwh_per_month` lines. A `name,kwh_per_month` header line,
/// blank lines and `#` comments are skipped.
pub fn read_appliances<R: Read>(input: R) -> Result<Vec<ApplianceProfile>, ReportError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| ReportError::Appliance(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(ReportError::Appliance(format!("line {line}: expected `name,kwh_per_month`")));
        }
        if out.is_empty() && &rec[0] == "name" && &rec[1] == "kwh_per_month" {
            continue;
        }
        let kwh: f64 = rec[1]
            .parse()
            .map_err(|_| ReportError::Appliance(format!("line {line}: `{}` is not a number", &rec[1])))?;
        out.push(ApplianceProfile::new(&rec[0], kwh)?);
    }
    Ok(out)
}

pub fn load_appliances(path: &Path) -> Result<Vec<ApplianceProfile>, ReportError> {
    let file = std::fs::File::open(path)
        .map_err(|e| ReportError::Appliance(format!("{}: {e}", path.display())))?;
    read_appliances(file)
}

/// How many months of each appliance's consumption `energy` covers, most
/// months first.
pub fn appliance_equiv(energy: EnergyKwh, profiles: &[ApplianceProfile]) -> Result<Vec<Equivalence>, ReportError> {
    if profiles.is_empty() {
        return Err(ReportError::Appliance("no appliance profiles given".into()));
    }
    let mut out = profiles
        .iter()
        .map(|p| {
            ApplianceProfile::new(p.name.clone(), p.kwh_per_month)?;
            Ok(Equivalence {
                name: p.name.clone(),
                months: energy.value() / p.kwh_per_month,
            })
        })
        .collect::<Result<Vec<_>, ReportError>>()?;
    out.sort_by(|a, b| b.months.total_cmp(&a.months).then_with(|| a.name.cmp(&b.name)));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kwh(v: f64) -> EnergyKwh {
        EnergyKwh::new(v).unwrap()
    }

    #[test]
    fn fridge() {
        let p = [ApplianceProfile::new("fridge", 30.0).unwrap()];
        let e = appliance_equiv(kwh(90.0), &p).unwrap();
        assert_eq!(e, vec![Equivalence { name: "fridge".into(), months: 3.0 }]);
    }

    #[test]
    fn zero_energy_and_ordering() {
        let p = [
            ApplianceProfile::new("kettle", 10.0).unwrap(),
            ApplianceProfile::new("house", 300.0).unwrap(),
        ];
        let e = appliance_equiv(kwh(0.0), &p).unwrap();
        assert!(e.iter().all(|x| x.months == 0.0));
        let e = appliance_equiv(kwh(356_000.0), &p).unwrap();
        assert_eq!(e[0].name, "kettle");
        assert_eq!(e[1].months, 356_000.0 / 300.0);
    }

    #[test]
    fn rejects_bad_profiles() {
        assert!(ApplianceProfile::new("x", 0.0).is_err());
        assert!(appliance_equiv(kwh(1.0), &[]).is_err());
        assert!(read_appliances("tv,-3\n".as_bytes()).is_err());
        assert!(read_appliances("tv,many\n".as_bytes()).is_err());
    }

    #[test]
    fn reads_file_format() {
        let doc = "name,kwh_per_month\n# illustrative\nfridge, 30\n\nhousehold,250.5\n";
        let p = read_appliances(doc.as_bytes()).unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1], ApplianceProfile::new("household", 250.5).unwrap());
    }
}
