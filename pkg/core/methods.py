from asgiref.sync import async_to_sync
from channels.layers import get_channel_layer

from .consumer import NOTIFICATION_GROUP


def send_notification(notification_type, content):
    channel = get_channel_layer()
    async_to_sync(channel.group_send)(
        NOTIFICATION_GROUP,
        {
            "type": "send_notification",
            "message": {"type": notification_type, "content": content},
        },
    )
