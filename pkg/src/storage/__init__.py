"""Binary matrix files, checkpoints and dataset layout."""
