# Monitoring of engine runs
