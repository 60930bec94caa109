from importlib.metadata import entry_points

# the plugin is registered through its entry point once the package is installed
if not any(ep.value == "fusion_impute.plugin" for ep in entry_points(group="pytest11")):
    pytest_plugins = ["fusion_impute.plugin"]
