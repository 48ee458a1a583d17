"""Physics-vetted descriptor selection fused into a SchNet property model."""
