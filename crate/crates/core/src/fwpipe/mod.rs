pub mod image;
pub mod policy;
pub mod sign;
pub mod tea;

pub use image::{FirmwareImage, ImageError, Target, Version};
pub use policy::{
    verify_and_install, InstallContext, InstallRejection, Installed, SigningPolicy, TargetPolicy,
};
pub use sign::{KeyMaterial, ECOSYSTEM_TEA_KEY, SIGNATURE_LEN};
pub use tea::TeaKey;
