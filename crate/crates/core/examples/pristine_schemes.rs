use mlmc_composite::plate::{pristine_study, PlateConfig, ShearIntegration, Support};

fn main() {
    env_logger::init();
    let max_level: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(3);
    for support in [Support::Hard] {
        for shear in [ShearIntegration::Directional] {
            let cfg = PlateConfig {
                shear_integration: shear,
                support,
                max_level,
                ..PlateConfig::default()
            };
            for r in pristine_study(&cfg).unwrap() {
                println!(
                    "{support:?} {shear:?} level {} M {} lambda {:.4} kN ({:.2}s)",
                    r.level, r.dof_count, r.lambda_kn, r.seconds
                );
            }
        }
    }
}
