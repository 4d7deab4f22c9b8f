# Problem model: sets, F-oracles, built-in registry, datasets, objectives
