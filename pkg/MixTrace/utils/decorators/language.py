from functools import wraps

from strings import get_string


def language(mystic):
    @wraps(mystic)
    async def wrapper(client, cfg, **kwargs):
        return await mystic(client, cfg, get_string("en"))

    return wrapper
