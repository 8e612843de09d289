//! Published per-attribute accuracies and category lists for CelebA and
//! LFWA, used as arithmetic fixtures for [`category_averages`].
//!
//! Category lists use the published 1-based attribute numbers; the
//! functions here convert them to 0-based [`Category`] members.
//!
//! [`category_averages`]: crate::metrics::category_averages

use crate::metrics::{Category, MetricsReport};

pub const ATTRIBUTE_NAMES: [&str; 40] = [
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Bushy_Eyebrows",
    "Attractive",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Black_Hair",
    "Blond_Hair",
    "Brown_Hair",
    "Gray_Hair",
    "Big_Lips",
    "Big_Nose",
    "Blurry",
    "Chubby",
    "Double_Chin",
    "Eyeglasses",
    "Goatee",
    "Heavy_Makeup",
    "High_Cheekbones",
    "Male",
    "Mouth_Slightly_Open",
    "Mustache",
    "Narrow_Eyes",
    "No_Beard",
    "Oval_Face",
    "Pale_Skin",
    "Pointy_Nose",
    "Receding_Hairline",
    "Rosy_Cheeks",
    "Sideburns",
    "Smiling",
    "Straight_Hair",
    "Wavy_Hair",
    "Wearing_Earrings",
    "Wearing_Hat",
    "Wearing_Lipstick",
    "Wearing_Necklace",
    "Wearing_Necktie",
    "Young",
];

pub const CELEBA_WITHOUT_NTCCA: [f64; 40] = [
    94.68, 84.92, 84.71, 85.11, 98.05, 97.73, 86.04, 84.18, 90.42, 95.47, 95.13, 88.48, 91.37,
    95.49, 96.18, 99.03, 98.42, 98.10, 91.47, 87.19, 98.43, 93.89, 96.59, 88.97, 96.71, 76.35,
    97.04, 77.81, 93.92, 95.78, 97.91, 93.07, 84.98, 86.54, 90.17, 98.91, 93.18, 88.76, 97.00,
    89.95,
];

pub const CELEBA_WITH_NTCCA: [f64; 40] = [
    95.46, 86.02, 86.23, 85.97, 99.12, 99.42, 95.44, 86.03, 91.14, 96.82, 96.44, 89.28, 92.00,
    96.32, 97.16, 99.68, 98.73, 98.59, 92.34, 88.95, 98.52, 94.61, 97.18, 89.42, 97.31, 78.52,
    97.18, 78.47, 94.35, 96.00, 98.34, 93.91, 85.49, 87.00, 91.04, 99.10, 94.00, 89.31, 97.26,
    90.71,
];

pub const LFWA_WITHOUT_NTCCA: [f64; 40] = [
    80.59, 85.14, 82.35, 83.78, 92.01, 92.78, 80.64, 84.51, 92.17, 97.28, 87.97, 80.91, 83.00,
    79.01, 80.24, 91.67, 85.58, 88.74, 95.72, 88.63, 93.68, 85.64, 94.31, 82.49, 82.00, 77.58,
    92.47, 84.09, 85.84, 87.13, 82.71, 91.80, 79.03, 81.00, 95.00, 91.49, 94.68, 90.73, 81.06,
    86.84,
];

pub const LFWA_WITH_NTCCA: [f64; 40] = [
    81.68, 86.23, 83.01, 84.33, 92.16, 93.44, 84.51, 85.17, 93.20, 98.09, 89.47, 81.83, 84.52,
    83.27, 82.00, 92.84, 87.12, 89.81, 96.41, 89.75, 94.21, 86.73, 95.67, 83.51, 82.43, 78.85,
    93.68, 84.93, 87.00, 88.39, 84.11, 92.77, 80.00, 81.45, 95.73, 92.38, 95.69, 91.75, 82.00,
    88.04,
];

/// Published category averages of the "with NTCCA" rows, I / II / III.
pub const CELEBA_WITH_NTCCA_CATEGORY_MEANS: [f64; 3] = [97.58, 78.49, 89.88];
pub const LFWA_WITH_NTCCA_CATEGORY_MEANS: [f64; 3] = [92.77, 78.85, 84.26];

const CELEBA_I: [usize; 19] = [
    1, 5, 6, 7, 10, 11, 14, 15, 16, 17, 18, 21, 23, 25, 27, 30, 31, 36, 39,
];
const CELEBA_II: [usize; 2] = [26, 28];
const LFWA_I: [usize; 19] = [
    5, 6, 9, 10, 11, 16, 18, 19, 20, 21, 23, 27, 30, 32, 35, 36, 37, 38, 40,
];
const LFWA_II: [usize; 1] = [26];
const LFWA_III: [usize; 20] = [
    1, 2, 3, 4, 7, 8, 12, 13, 14, 15, 17, 22, 24, 25, 28, 29, 31, 33, 34, 39,
];

fn category(name: &str, one_based: &[usize]) -> Category {
    Category {
        name: name.into(),
        members: one_based.iter().map(|i| i - 1).collect(),
    }
}

/// Categories I, II, III for CelebA. Category III is every attribute not
/// in I or II.
pub fn celeba_categories() -> Vec<Category> {
    let rest: Vec<usize> = (1..=40)
        .filter(|i| !CELEBA_I.contains(i) && !CELEBA_II.contains(i))
        .collect();
    vec![
        category("I", &CELEBA_I),
        category("II", &CELEBA_II),
        category("III", &rest),
    ]
}

pub fn lfwa_categories() -> Vec<Category> {
    vec![
        category("I", &LFWA_I),
        category("II", &LFWA_II),
        category("III", &LFWA_III),
    ]
}

pub fn report(accuracies: &[f64; 40]) -> MetricsReport {
    MetricsReport::new(
        ATTRIBUTE_NAMES.iter().map(|s| s.to_string()).collect(),
        accuracies.to_vec(),
    )
    .expect("fixture accuracies are valid")
}
