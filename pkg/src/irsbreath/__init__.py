"""IRS-assisted self-interference cancellation and WiFi CSI breath tracking."""

__version__ = "0.1.0"
