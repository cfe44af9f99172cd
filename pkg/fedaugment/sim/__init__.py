"""Core simulator: data, federation, GAN training, augmentation and evaluation."""
