# Samplers Service
