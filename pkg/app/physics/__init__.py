"""Physical field generators and the finite-difference flow solver."""
