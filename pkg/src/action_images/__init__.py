"""Action images: robot actions as multi-view heatmap videos."""
