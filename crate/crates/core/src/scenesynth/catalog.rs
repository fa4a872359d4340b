use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleCategory {
    Car,
    Truck,
    Motorbike,
    Bike,
}

impl VehicleCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleCategory::Car => "car",
            VehicleCategory::Truck => "truck",
            VehicleCategory::Motorbike => "motorbike",
            VehicleCategory::Bike => "bike",
        }
    }
}

/// A renderable vehicle: an axis-aligned cuboid with a body color.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VehicleSpec {
    pub name: &'static str,
    pub category: VehicleCategory,
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub color_rgb: [u8; 3],
}

const fn v(
    name: &'static str,
    category: VehicleCategory,
    length_m: f64,
    width_m: f64,
    height_m: f64,
    color_rgb: [u8; 3],
) -> VehicleSpec {
    VehicleSpec {
        name,
        category,
        length_m,
        width_m,
        height_m,
        color_rgb,
    }
}

use VehicleCategory::{Bike, Car, Motorbike, Truck};

static CATALOG: [VehicleSpec; 27] = [
    v("audi.a2", Car, 3.83, 1.67, 1.55, [196, 32, 38]),
    v("audi.etron", Car, 4.90, 1.94, 1.62, [235, 235, 240]),
    v("audi.tt", Car, 4.18, 1.83, 1.35, [250, 200, 20]),
    v("bmw.grandtourer", Car, 4.56, 1.80, 1.60, [20, 40, 110]),
    v("chevrolet.impala", Car, 5.36, 2.03, 1.41, [90, 140, 60]),
    v("citroen.c3", Car, 3.99, 1.75, 1.47, [210, 120, 30]),
    v("dodge.charger_police", Car, 5.04, 1.91, 1.48, [25, 25, 30]),
    v("jeep.wrangler_rubicon", Car, 4.22, 1.88, 1.84, [120, 130, 90]),
    v("lincoln.mkz_2017", Car, 4.93, 1.86, 1.48, [150, 150, 155]),
    v("mercedes.coupe", Car, 4.70, 1.81, 1.40, [180, 0, 60]),
    v("mini.cooper_s", Car, 3.82, 1.73, 1.42, [0, 150, 200]),
    v("mustang.mustang", Car, 4.78, 1.92, 1.38, [230, 90, 10]),
    v("nissan.micra", Car, 3.83, 1.67, 1.52, [240, 160, 190]),
    v("nissan.patrol", Car, 5.17, 1.99, 1.94, [60, 60, 65]),
    v("seat.leon", Car, 4.28, 1.82, 1.46, [200, 200, 40]),
    v("tesla.model3", Car, 4.69, 1.85, 1.44, [245, 245, 245]),
    v("toyota.prius", Car, 4.54, 1.76, 1.49, [70, 110, 180]),
    v("carlamotors.carlacola", Truck, 5.20, 2.60, 2.50, [200, 20, 20]),
    v("tesla.cybertruck", Truck, 5.89, 2.20, 1.91, [175, 180, 185]),
    v("volkswagen.t2", Truck, 4.51, 1.78, 2.04, [50, 130, 160]),
    v("harley-davidson.low_rider", Motorbike, 2.35, 0.90, 1.45, [15, 15, 15]),
    v("kawasaki.ninja", Motorbike, 2.04, 0.75, 1.50, [40, 190, 40]),
    v("yamaha.yzf", Motorbike, 2.02, 0.72, 1.50, [30, 60, 200]),
    v("vespa.zx125", Motorbike, 1.86, 0.70, 1.45, [150, 200, 220]),
    v("bh.crossbike", Bike, 1.75, 0.60, 1.70, [220, 40, 40]),
    v("diamondback.century", Bike, 1.80, 0.55, 1.70, [40, 40, 180]),
    v("gazelle.omafiets", Bike, 1.85, 0.62, 1.75, [20, 80, 40]),
];

/// The fixed 27-entry vehicle catalog.
pub fn catalog() -> &'static [VehicleSpec] {
    &CATALOG
}

pub fn find_vehicle(name: &str) -> Option<&'static VehicleSpec> {
    CATALOG.iter().find(|v| v.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn catalog_has_27_unique_positive_entries() {
        assert_eq!(catalog().len(), 27);
        let names: HashSet<_> = catalog().iter().map(|v| v.name).collect();
        assert_eq!(names.len(), 27);
        for v in catalog() {
            assert!(v.length_m > 0.0 && v.width_m > 0.0 && v.height_m > 0.0);
        }
        assert!(find_vehicle("kawasaki.ninja").is_some());
    }

    #[test]
    fn two_wheelers_are_narrower_than_every_car() {
        let narrowest_car = catalog()
            .iter()
            .filter(|v| v.category == Car)
            .map(|v| v.width_m)
            .fold(f64::INFINITY, f64::min);
        for v in catalog().iter().filter(|v| matches!(v.category, Motorbike | Bike)) {
            assert!(v.width_m < narrowest_car, "{}", v.name);
        }
    }
}
