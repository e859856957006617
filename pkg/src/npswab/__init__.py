"""Force-feedback compliant swab insertion simulator."""
