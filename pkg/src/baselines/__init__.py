# baselines package
