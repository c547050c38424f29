# Potentials Service
