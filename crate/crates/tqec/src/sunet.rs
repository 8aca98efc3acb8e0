//! Self-attention U-Net decoder models.
