# Gibbs Service
