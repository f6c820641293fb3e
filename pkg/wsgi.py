from app.main import configure_app

# Configure the app without the selftest command
application = configure_app(allow_selftest=False)
