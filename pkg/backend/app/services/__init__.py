# Services package: training, evaluation, metrics and baselines
