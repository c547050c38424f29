# Experiments Service
