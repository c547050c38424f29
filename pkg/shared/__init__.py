# Shared core: measures, kernels, targets and infrastructure
